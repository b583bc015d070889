"""Federated training over relational transaction data with DP and secure aggregation."""

from .data import GenConfig, RelationalDataset, Standardizer, generate, load_csv, split, write_csv
from .estimator import FedRDClassifier, TransactionOnlyClassifier
from .training import TrainConfig, TrainingReport, run_training

__all__ = [
    "FedRDClassifier",
    "GenConfig",
    "RelationalDataset",
    "Standardizer",
    "TrainConfig",
    "TrainingReport",
    "TransactionOnlyClassifier",
    "generate",
    "load_csv",
    "run_training",
    "split",
    "write_csv",
]

__version__ = "0.1.0"
