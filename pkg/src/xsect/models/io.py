"""Lossless predictor serialization.

File layout: one JSON header line (magic string, format version, kind,
config, seed, array manifest) followed by the raw little-endian bytes of
each array in manifest order. Round-tripping reproduces predictions bit
for bit.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .dnn import DnnConfig, DnnPredictor
from .forest import ForestConfig, ForestPredictor, _Tree
from .ridge import RidgeConfig, RidgePredictor

MAGIC = "xsect-predictor"
VERSION = 1

_CONFIG_TYPES = {"ridge": RidgeConfig, "forest": ForestConfig, "dnn": DnnConfig}


def _predictor_arrays(predictor) -> list[tuple[str, np.ndarray]]:
    if predictor.kind == "ridge":
        return [("beta", predictor.beta), ("intercept", np.array([predictor.intercept]))]
    if predictor.kind == "forest":
        trees = predictor.trees
        offsets = np.cumsum([0] + [t.feature.size for t in trees]).astype(np.int64)
        return [
            ("offsets", offsets),
            ("feature", np.concatenate([t.feature for t in trees])),
            ("threshold", np.concatenate([t.threshold for t in trees])),
            ("left", np.concatenate([t.left for t in trees])),
            ("right", np.concatenate([t.right for t in trees])),
            ("value", np.concatenate([t.value for t in trees])),
        ]
    if predictor.kind == "dnn":
        arrays = [(f"param.{k}", v) for k, v in predictor.params.items()]
        arrays += [(f"running.{k}", v) for k, v in predictor.running.items()]
        return arrays
    raise ValueError(f"unknown predictor kind {predictor.kind!r}")


def save_predictor(predictor, path: str | Path) -> None:
    arrays = _predictor_arrays(predictor)
    manifest = []
    blobs = []
    for name, arr in arrays:
        arr = np.ascontiguousarray(arr)
        arr = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        manifest.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    header = {
        "magic": MAGIC,
        "version": VERSION,
        "kind": predictor.kind,
        "config": asdict(predictor.config),
        "seed": predictor.seed,
        "n_features": predictor.n_features,
        "arrays": manifest,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for blob in blobs:
            fh.write(blob)


def load_predictor(path: str | Path):
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("magic") != MAGIC:
            raise ValueError(f"{path}: not a predictor file (bad magic)")
        if header.get("version") != VERSION:
            raise ValueError(f"{path}: unsupported version {header.get('version')}")
        kind = header["kind"]
        config_type = _CONFIG_TYPES.get(kind)
        if config_type is None:
            raise ValueError(f"{path}: unknown predictor kind {kind!r}")
        config_fields = dict(header["config"])
        for key in ("hidden_layers", "dropout_rates"):
            if key in config_fields:
                config_fields[key] = tuple(config_fields[key])
        config = config_type(**config_fields)
        arrays: dict[str, np.ndarray] = {}
        for spec in header["arrays"]:
            dtype = np.dtype(spec["dtype"])
            count = int(np.prod(spec["shape"])) if spec["shape"] else 1
            data = fh.read(count * dtype.itemsize)
            arrays[spec["name"]] = np.frombuffer(data, dtype=dtype).reshape(spec["shape"]).copy()

    if kind == "ridge":
        return RidgePredictor(
            beta=arrays["beta"], intercept=float(arrays["intercept"][0]), config=config
        )
    if kind == "forest":
        offsets = arrays["offsets"]
        trees = []
        for i in range(offsets.size - 1):
            lo, hi = int(offsets[i]), int(offsets[i + 1])
            trees.append(
                _Tree(
                    arrays["feature"][lo:hi],
                    arrays["threshold"][lo:hi],
                    arrays["left"][lo:hi],
                    arrays["right"][lo:hi],
                    arrays["value"][lo:hi],
                )
            )
        return ForestPredictor(
            trees=trees,
            n_features=int(header["n_features"]),
            config=config,
            seed=header["seed"],
        )
    params = {k[len("param."):]: v for k, v in arrays.items() if k.startswith("param.")}
    running = {k[len("running."):]: v for k, v in arrays.items() if k.startswith("running.")}
    return DnnPredictor(
        params=params,
        running=running,
        n_features=int(header["n_features"]),
        config=config,
        seed=header["seed"],
    )
