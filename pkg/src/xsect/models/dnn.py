"""Feedforward regression network trained with Adam.

Each hidden layer applies affine -> batch norm -> ReLU -> inverted dropout;
a final affine maps to a single output. Training minimizes mean squared
error over the window in shuffled mini-batches for exactly the configured
number of epochs. Batch norm keeps exponential running statistics for
inference, and dropout rescales surviving activations at train time so
prediction is a plain forward pass.

All arithmetic is float64 and every random draw comes from one seeded
generator in a fixed order, so a (window, config, seed) triple reproduces
the fitted parameters bit for bit. The forward/backward passes are pure
functions of (params, batch, masks), which is what the finite-difference
gradient tests exercise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..preprocess import TrainingWindow


class TrainingDivergedError(RuntimeError):
    """Raised when a training loss turns non-finite."""


@dataclass(frozen=True)
class DnnConfig:
    hidden_layers: tuple[int, ...]
    dropout_rates: tuple[float, ...]
    epochs: int = 20
    minibatch: int = 500
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    bn_momentum: float = 0.99
    bn_epsilon: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(self.hidden_layers))
        object.__setattr__(self, "dropout_rates", tuple(self.dropout_rates))
        if len(self.hidden_layers) != len(self.dropout_rates):
            raise ValueError("need one dropout rate per hidden layer")
        if any(w < 1 for w in self.hidden_layers):
            raise ValueError("hidden layer widths must be >= 1")
        if any(not 0 <= r < 1 for r in self.dropout_rates):
            raise ValueError("dropout rates must lie in [0, 1)")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.minibatch < 1:
            raise ValueError("minibatch must be >= 1")


def _truncated_normal(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    """Normal(0, std) with |draw| > 2 std redrawn until inside the bounds."""
    out = rng.standard_normal(shape) * std
    bad = np.abs(out) > 2 * std
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum())) * std
        bad = np.abs(out) > 2 * std
    return out


def init_params(rng: np.random.Generator, n_features: int, config: DnnConfig):
    """Fresh parameter and running-statistic dictionaries.

    Weights are truncated normal with std sqrt(2 / fan_in); biases, batch
    norm shifts start at zero, batch norm scales at one, running statistics
    at (0, 1).
    """
    params: dict[str, np.ndarray] = {}
    running: dict[str, np.ndarray] = {}
    fan_in = n_features
    for i, width in enumerate(config.hidden_layers):
        params[f"w{i}"] = _truncated_normal(rng, (fan_in, width), np.sqrt(2.0 / fan_in))
        params[f"b{i}"] = np.zeros(width)
        params[f"gamma{i}"] = np.ones(width)
        params[f"beta{i}"] = np.zeros(width)
        running[f"mean{i}"] = np.zeros(width)
        running[f"var{i}"] = np.ones(width)
        fan_in = width
    params["w_out"] = _truncated_normal(rng, (fan_in, 1), np.sqrt(2.0 / fan_in))
    params["b_out"] = np.zeros(1)
    return params, running


def make_masks(rng: np.random.Generator, batch_size: int, config: DnnConfig):
    """Inverted-dropout masks, entries 0 or 1/keep; None for rate-0 layers."""
    masks = []
    for i, rate in enumerate(config.dropout_rates):
        if rate == 0:
            masks.append(None)
            continue
        keep = 1.0 - rate
        masks.append((rng.random((batch_size, config.hidden_layers[i])) < keep) / keep)
    return masks


def forward_train(params, x, y, masks, config: DnnConfig):
    """Training-mode forward pass (batch statistics, dropout applied).

    Returns (loss, cache); the cache holds every intermediate the backward
    pass needs.
    """
    a = x
    layers = []
    for i in range(len(config.hidden_layers)):
        z = a @ params[f"w{i}"] + params[f"b{i}"]
        mu = z.mean(axis=0)
        var = z.var(axis=0)
        inv_std = 1.0 / np.sqrt(var + config.bn_epsilon)
        zhat = (z - mu) * inv_std
        h = params[f"gamma{i}"] * zhat + params[f"beta{i}"]
        r = np.maximum(h, 0.0)
        mask = masks[i]
        a_next = r if mask is None else r * mask
        layers.append({
            "a_in": a, "zhat": zhat, "inv_std": inv_std, "h": h,
            "mask": mask, "mu": mu, "var": var,
        })
        a = a_next
    out = (a @ params["w_out"] + params["b_out"])[:, 0]
    err = out - y
    with np.errstate(over="ignore"):  # inf loss is how divergence is detected
        loss = float(np.mean(err * err))
    cache = {"layers": layers, "a_last": a, "err": err}
    return loss, cache


def backward(params, cache, config: DnnConfig):
    """Gradients of the mean-squared-error loss for every parameter."""
    grads: dict[str, np.ndarray] = {}
    err = cache["err"]
    m = err.size
    dout = (2.0 / m) * err
    grads["w_out"] = cache["a_last"].T @ dout[:, None]
    grads["b_out"] = np.array([dout.sum()])
    da = dout[:, None] @ params["w_out"].T
    for i in reversed(range(len(config.hidden_layers))):
        layer = cache["layers"][i]
        dr = da if layer["mask"] is None else da * layer["mask"]
        dh = dr * (layer["h"] > 0)
        zhat = layer["zhat"]
        grads[f"gamma{i}"] = (dh * zhat).sum(axis=0)
        grads[f"beta{i}"] = dh.sum(axis=0)
        dzhat = dh * params[f"gamma{i}"]
        # batch-norm backward through the batch mean and variance
        dz = (layer["inv_std"] / m) * (
            m * dzhat - dzhat.sum(axis=0) - zhat * (dzhat * zhat).sum(axis=0)
        )
        grads[f"w{i}"] = layer["a_in"].T @ dz
        grads[f"b{i}"] = dz.sum(axis=0)
        da = dz @ params[f"w{i}"].T
    return grads


def forward_inference(params, running, x, config: DnnConfig) -> np.ndarray:
    """Inference-mode forward: running statistics, dropout off."""
    a = x
    for i in range(len(config.hidden_layers)):
        z = a @ params[f"w{i}"] + params[f"b{i}"]
        zhat = (z - running[f"mean{i}"]) / np.sqrt(running[f"var{i}"] + config.bn_epsilon)
        a = np.maximum(params[f"gamma{i}"] * zhat + params[f"beta{i}"], 0.0)
    return (a @ params["w_out"] + params["b_out"])[:, 0]


class DnnPredictor:
    kind = "dnn"

    def __init__(self, params, running, n_features: int, config: DnnConfig, seed: int):
        self.params = params
        self.running = running
        self._n_features = n_features
        self.config = config
        self.seed = seed

    @property
    def n_features(self) -> int:
        return self._n_features

    def predict(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        if features.ndim != 2 or features.shape[1] != self.n_features:
            raise ValueError(
                f"feature dimension must be {self.n_features}, got {features.shape}"
            )
        return forward_inference(self.params, self.running, features, self.config)


def dnn_fit(window: TrainingWindow, config: DnnConfig, seed: int) -> DnnPredictor:
    x = np.asarray(window.features, dtype=float)
    y = np.asarray(window.targets, dtype=float)
    if y.size < 1:
        raise ValueError("dnn_fit needs at least one sample")
    rng = np.random.default_rng(seed)
    params, running = init_params(rng, x.shape[1], config)

    adam_m = {k: np.zeros_like(v) for k, v in params.items()}
    adam_v = {k: np.zeros_like(v) for k, v in params.items()}
    step = 0
    for epoch in range(config.epochs):
        perm = rng.permutation(y.size)
        for start in range(0, y.size, config.minibatch):
            batch = perm[start : start + config.minibatch]
            masks = make_masks(rng, batch.size, config)
            loss, cache = forward_train(params, x[batch], y[batch], masks, config)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite training loss in epoch {epoch}; "
                    f"try a smaller learning_rate than {config.learning_rate}"
                )
            for i in range(len(config.hidden_layers)):
                layer = cache["layers"][i]
                running[f"mean{i}"] = (
                    config.bn_momentum * running[f"mean{i}"]
                    + (1 - config.bn_momentum) * layer["mu"]
                )
                running[f"var{i}"] = (
                    config.bn_momentum * running[f"var{i}"]
                    + (1 - config.bn_momentum) * layer["var"]
                )
            grads = backward(params, cache, config)
            step += 1
            correction1 = 1 - config.beta1 ** step
            correction2 = 1 - config.beta2 ** step
            for key in params:
                g = grads[key]
                adam_m[key] = config.beta1 * adam_m[key] + (1 - config.beta1) * g
                adam_v[key] = config.beta2 * adam_v[key] + (1 - config.beta2) * (g * g)
                m_hat = adam_m[key] / correction1
                v_hat = adam_v[key] / correction2
                params[key] = params[key] - config.learning_rate * m_hat / (
                    np.sqrt(v_hat) + config.epsilon
                )
    return DnnPredictor(
        params=params, running=running, n_features=x.shape[1], config=config, seed=seed
    )
