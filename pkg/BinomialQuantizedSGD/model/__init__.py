"""Experiment configuration"""
from .ExperimentConfig import (
    ClientSpec,
    ExperimentConfig,
    GridSpec,
    NoiseSpec,
    ObjectiveSpec,
    TrainingSpec,
)
