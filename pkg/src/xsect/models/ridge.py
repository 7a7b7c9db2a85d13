"""Closed-form ridge regression with an unpenalized intercept."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..preprocess import TrainingWindow


@dataclass(frozen=True)
class RidgeConfig:
    alpha: float = 1.0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")


class RidgePredictor:
    kind = "ridge"

    def __init__(self, beta: np.ndarray, intercept: float, config: RidgeConfig):
        self.beta = np.asarray(beta, dtype=float)
        self.intercept = float(intercept)
        self.config = config
        self.seed = None

    @property
    def n_features(self) -> int:
        return self.beta.size

    def predict(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        if features.ndim != 2 or features.shape[1] != self.n_features:
            raise ValueError(
                f"feature dimension must be {self.n_features}, got {features.shape}"
            )
        return features @ self.beta + self.intercept


def ridge_fit(window: TrainingWindow, config: RidgeConfig) -> RidgePredictor:
    """Solve (Xc'Xc + alpha I) beta = Xc'yc on column-centered data.

    Centering leaves the intercept unpenalized; it is recovered as
    y_mean - beta . x_mean.
    """
    x = np.asarray(window.features, dtype=float)
    y = np.asarray(window.targets, dtype=float)
    if y.size < 1:
        raise ValueError("ridge_fit needs at least one sample")
    x_mean = x.mean(axis=0)
    y_mean = float(y.mean())
    xc = x - x_mean
    yc = y - y_mean
    system = xc.T @ xc + config.alpha * np.eye(x.shape[1])
    try:
        beta = np.linalg.solve(system, xc.T @ yc)
    except np.linalg.LinAlgError:
        raise ValueError(
            "normal equations are singular at alpha = 0; set alpha > 0 to regularize"
        ) from None
    intercept = y_mean - float(x_mean @ beta)
    return RidgePredictor(beta=beta, intercept=intercept, config=config)
