"""BQ-SGD simulator"""
from .Datasets import (
    Dataset,
    SyntheticTask,
    fetch_idx_dataset,
    generate_synthetic,
    load_idx_dataset,
    partition_data,
    two_class_subset,
)
from .Objectives import LogisticObjective, Objective, QuadraticObjective
from .Trainer import (
    ClientConfig,
    LocalUpdate,
    MetricsRow,
    ModelState,
    Trainer,
    TrainingConfig,
    aggregate,
    aggregated_second_moment_bound,
    check_clients,
    clipping_bias,
    local_step,
    sample_batch,
    convergence_bound,
    train,
    write_metrics_csv,
)
