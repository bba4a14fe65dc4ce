"""Post-hoc calibrators for node-classification logits."""

from .base import (
    ABLATIONS,
    METHODS,
    TEMPERATURE_FLOOR,
    CalibratedOutput,
    Calibrator,
    CalibratorConfig,
    apply_calibrator,
    fit_calibrator,
    initial_calibrator,
    make_model,
    uncalibrated,
)
from .cagcn import CaGCN, normalized_adjacency
from .gats import GATS
from .scaling import EnsembleTemperatureScaling, TemperatureScaling, VectorScaling, project_to_simplex
from .serialize import calibrator_from_json, calibrator_to_json, load_calibrator, save_calibrator

__all__ = [
    "ABLATIONS", "METHODS", "TEMPERATURE_FLOOR", "CalibratedOutput", "Calibrator", "CalibratorConfig",
    "apply_calibrator", "fit_calibrator", "initial_calibrator", "make_model", "uncalibrated",
    "CaGCN", "normalized_adjacency", "GATS", "EnsembleTemperatureScaling", "TemperatureScaling",
    "VectorScaling", "project_to_simplex", "calibrator_from_json", "calibrator_to_json",
    "load_calibrator", "save_calibrator",
]
