"""Experiment orchestration"""
from .ExperimentAPI import (
    ExperimentAPI,
    GridRow,
    NoiseReport,
    PrivacyReportRow,
    TrainingResult,
    plan_csv_row,
)
