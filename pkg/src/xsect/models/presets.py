"""The twelve named model presets of the standard experiment grid."""

from __future__ import annotations

from .dnn import DnnConfig
from .forest import ForestConfig
from .ridge import RidgeConfig

_DNN_SHAPES = {
    "A": ((500, 200, 100, 50, 10), (0.5, 0.4, 0.3, 0.2, 0.1)),
    "B": ((200, 200, 100, 100, 50), (0.5, 0.5, 0.3, 0.3, 0.1)),
    "C": ((300, 300, 150, 150, 50), (0.5, 0.5, 0.3, 0.3, 0.1)),
}


def _dnn(shape: str, epochs: int) -> DnnConfig:
    layers, rates = _DNN_SHAPES[shape]
    return DnnConfig(hidden_layers=layers, dropout_rates=rates, epochs=epochs, minibatch=500)


PRESETS = {
    "DNN1": ("dnn", _dnn("A", 20)),
    "DNN2": ("dnn", _dnn("A", 30)),
    "DNN3": ("dnn", _dnn("B", 20)),
    "DNN4": ("dnn", _dnn("B", 30)),
    "DNN5": ("dnn", _dnn("C", 20)),
    "DNN6": ("dnn", _dnn("C", 30)),
    "RF1": ("forest", ForestConfig(n_estimators=1000, max_features=11, max_depth=3)),
    "RF2": ("forest", ForestConfig(n_estimators=1000, max_features=11, max_depth=5)),
    "RF3": ("forest", ForestConfig(n_estimators=1000, max_features=11, max_depth=7)),
    "RR1": ("ridge", RidgeConfig(alpha=0.1)),
    "RR2": ("ridge", RidgeConfig(alpha=1.0)),
    "RR3": ("ridge", RidgeConfig(alpha=10.0)),
}

PRESET_NAMES = tuple(PRESETS)


def preset(name: str):
    """(kind, config) for a preset name; raises on unknown names."""
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(
            f"unknown model preset {name!r}; expected one of {', '.join(PRESET_NAMES)}"
        ) from None
