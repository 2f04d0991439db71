"""Configuration, data ingestion, experiment execution and plotting."""
from .config import DEFAULTS, ExperimentConfig
from .data import load_mnist_idx, partition_dataset, read_idx, write_idx
from .experiment import COLUMNS, MetricsTable, run_experiment
from .plots import emit_plots

__all__ = [
    "COLUMNS", "DEFAULTS", "ExperimentConfig", "MetricsTable", "emit_plots", "load_mnist_idx",
    "partition_dataset", "read_idx", "run_experiment", "write_idx",
]
