"""Cellular-automaton reservoir computing for image classification."""

from .eca import Rule, classify_dynamics, decode_rule, evolve, step_row, symmetry_representatives
from .reservoir import extract_features, extract_features_batch, feature_length
from .readout import ReadoutModel, TrainParams, error_rate, predict, train
from .config import ExperimentConfig

__version__ = "0.1.0"

__all__ = [
    "Rule",
    "classify_dynamics",
    "decode_rule",
    "evolve",
    "step_row",
    "symmetry_representatives",
    "extract_features",
    "extract_features_batch",
    "feature_length",
    "ReadoutModel",
    "TrainParams",
    "error_rate",
    "predict",
    "train",
    "ExperimentConfig",
]
