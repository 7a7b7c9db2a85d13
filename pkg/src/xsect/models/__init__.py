"""Predictor families behind a single fit/predict interface."""

from __future__ import annotations

from ..preprocess import TrainingWindow
from .dnn import DnnConfig, DnnPredictor, TrainingDivergedError, dnn_fit
from .forest import ForestConfig, ForestPredictor, forest_fit
from .io import load_predictor, save_predictor
from .presets import PRESET_NAMES, PRESETS, preset
from .ridge import RidgeConfig, RidgePredictor, ridge_fit

__all__ = [
    "DnnConfig",
    "DnnPredictor",
    "ForestConfig",
    "ForestPredictor",
    "PRESET_NAMES",
    "PRESETS",
    "RidgeConfig",
    "RidgePredictor",
    "TrainingDivergedError",
    "dnn_fit",
    "fit_predictor",
    "forest_fit",
    "load_predictor",
    "predict",
    "preset",
    "ridge_fit",
    "save_predictor",
]


def fit_predictor(kind: str, window: TrainingWindow, config, seed: int = 0):
    """Fit a predictor of the given kind on a training window."""
    if kind == "ridge":
        return ridge_fit(window, config)
    if kind == "forest":
        return forest_fit(window, config, seed)
    if kind == "dnn":
        return dnn_fit(window, config, seed)
    raise ValueError(f"unknown predictor kind {kind!r}")


def predict(predictor, features):
    """Score feature rows with a fitted predictor."""
    return predictor.predict(features)
