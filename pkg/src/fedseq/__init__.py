"""Centralized and federated recurrent regression of valence and arousal
from per-frame feature sequences (facial action units or similar)."""

__version__ = "0.1.0"

from .config import ExperimentConfig, load_config  # noqa: E402
from .data import FeatureSequence, generate_synthetic, load_dataset, plan_folds  # noqa: E402
from .estimators import (  # noqa: E402
    FederatedRecurrentRegressor,
    RecurrentRegressor,
    SequenceScaler,
)
from .metrics import MetricReport, ccc, evaluate_predictions, pearson  # noqa: E402
from .nets import CellKind, NetworkConfig, backward, forward, init_network  # noqa: E402
from .params import ParameterSet  # noqa: E402

__all__ = [
    "ExperimentConfig", "load_config", "FeatureSequence", "generate_synthetic",
    "load_dataset", "plan_folds", "FederatedRecurrentRegressor", "RecurrentRegressor",
    "SequenceScaler", "MetricReport", "ccc", "evaluate_predictions", "pearson",
    "CellKind", "NetworkConfig", "backward", "forward", "init_network", "ParameterSet",
]
