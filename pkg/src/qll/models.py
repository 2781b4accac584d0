"""Minimal differentiable per-class logit producers.

A linear map and a one-hidden-layer rectifier network, with hand-written
forward/backward passes. The per-class outputs are raw logits; prediction is
argmax (ties go to the smallest index). Parameters live in plain numpy
arrays exposed through ``params`` dicts so the optimizer stays generic.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import RngStream
from .dataio import atomic_write_bytes

__all__ = [
    "LinearModel",
    "MlpModel",
    "ForwardCache",
    "init_model",
    "forward",
    "backward",
    "predict",
    "save_model",
    "load_model",
]

MODEL_MAGIC = b"QLLM"
MODEL_KINDS = ("linear", "mlp")
_KIND_CODES = {"linear": 1, "mlp": 2}


@dataclass
class LinearModel:
    weights: np.ndarray  # (c, d)
    bias: np.ndarray  # (c,)

    @property
    def class_count(self) -> int:
        return self.weights.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[1]

    def params(self) -> dict[str, np.ndarray]:
        return {"weights": self.weights, "bias": self.bias}


@dataclass
class MlpModel:
    hidden_w: np.ndarray  # (h, d)
    hidden_b: np.ndarray  # (h,)
    out_w: np.ndarray  # (c, h)
    out_b: np.ndarray  # (c,)

    @property
    def class_count(self) -> int:
        return self.out_w.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.hidden_w.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.hidden_w.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {
            "hidden_w": self.hidden_w,
            "hidden_b": self.hidden_b,
            "out_w": self.out_w,
            "out_b": self.out_b,
        }


@dataclass
class ForwardCache:
    """Activations retained for the backward pass."""

    x: np.ndarray  # (n, d)
    pre_hidden: np.ndarray | None = None  # (n, h), mlp only
    hidden: np.ndarray | None = None  # (n, h), mlp only
    squeezed: bool = False  # input was a single example


def init_model(
    kind: str,
    class_count: int,
    feature_dim: int,
    rng: RngStream,
    hidden_dim: int = 32,
):
    """Fresh model with Gaussian(0, 2/fan_in) weights and zero biases."""
    if kind not in MODEL_KINDS:
        raise ValueError(f"kind must be one of {MODEL_KINDS}, got {kind!r}")
    if class_count < 2 or feature_dim < 1:
        raise ValueError("need class_count >= 2 and feature_dim >= 1")
    if kind == "linear":
        w = rng.standard_normal((class_count, feature_dim)) * np.sqrt(2.0 / feature_dim)
        return LinearModel(w, np.zeros(class_count))
    if hidden_dim < 1:
        raise ValueError("hidden_dim must be >= 1")
    w1 = rng.standard_normal((hidden_dim, feature_dim)) * np.sqrt(2.0 / feature_dim)
    w2 = rng.standard_normal((class_count, hidden_dim)) * np.sqrt(2.0 / hidden_dim)
    return MlpModel(w1, np.zeros(hidden_dim), w2, np.zeros(class_count))


def forward(model, x) -> tuple[np.ndarray, ForwardCache]:
    """Logits for one example (d,) or a batch (n, d)."""
    x = np.asarray(x, dtype=np.float64)
    squeezed = x.ndim == 1
    xb = x[None, :] if squeezed else x
    if xb.ndim != 2 or xb.shape[1] != model.feature_dim:
        raise ValueError(f"expected features of dim {model.feature_dim}, got shape {x.shape}")

    if isinstance(model, LinearModel):
        logits = xb @ model.weights.T + model.bias
        cache = ForwardCache(xb, squeezed=squeezed)
    else:
        pre = xb @ model.hidden_w.T + model.hidden_b
        act = np.maximum(pre, 0.0)
        logits = act @ model.out_w.T + model.out_b
        cache = ForwardCache(xb, pre_hidden=pre, hidden=act, squeezed=squeezed)
    return (logits[0] if squeezed else logits), cache


def backward(model, cache: ForwardCache, d_logits) -> dict[str, np.ndarray]:
    """Parameter gradients from d(loss)/d(logits) via the chain rule."""
    g = np.asarray(d_logits, dtype=np.float64)
    if cache.squeezed:
        g = g[None, :]
    if g.shape != (cache.x.shape[0], model.class_count):
        raise ValueError(f"d_logits shape {d_logits.shape} does not match the forward pass")

    if isinstance(model, LinearModel):
        return {"weights": g.T @ cache.x, "bias": g.sum(axis=0)}
    d_act = g @ model.out_w
    d_pre = d_act * (cache.pre_hidden > 0.0)
    return {
        "out_w": g.T @ cache.hidden,
        "out_b": g.sum(axis=0),
        "hidden_w": d_pre.T @ cache.x,
        "hidden_b": d_pre.sum(axis=0),
    }


def predict(logits):
    """Argmax class index; ties break toward the smallest index."""
    z = np.asarray(logits)
    if not np.all(np.isfinite(z)):
        raise ValueError("logits must be finite")
    if z.ndim == 1:
        return int(np.argmax(z))
    return np.argmax(z, axis=1)


def save_model(model, path) -> Path:
    """Checkpoint: magic, u8 kind, u32 dims, float32 parameter blocks."""
    path = Path(path)
    if isinstance(model, LinearModel):
        header = MODEL_MAGIC + struct.pack(
            "<BII", _KIND_CODES["linear"], model.class_count, model.feature_dim
        )
        blocks = [model.weights, model.bias]
    elif isinstance(model, MlpModel):
        header = MODEL_MAGIC + struct.pack(
            "<BIII",
            _KIND_CODES["mlp"],
            model.class_count,
            model.feature_dim,
            model.hidden_dim,
        )
        blocks = [model.hidden_w, model.hidden_b, model.out_w, model.out_b]
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    blob = header + b"".join(np.ascontiguousarray(b, dtype="<f4").tobytes() for b in blocks)
    atomic_write_bytes(path, blob)
    return path


def load_model(path):
    raw = Path(path).read_bytes()
    if raw[:4] != MODEL_MAGIC:
        raise ValueError(f"{path}: not a model checkpoint")
    kind = raw[4]

    def take(offset: int, shape: tuple[int, ...]) -> tuple[np.ndarray, int]:
        count = int(np.prod(shape))
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
        return arr.reshape(shape).astype(np.float64), offset + 4 * count

    if kind == _KIND_CODES["linear"]:
        c, d = struct.unpack_from("<II", raw, 5)
        off = 5 + 8
        w, off = take(off, (c, d))
        b, off = take(off, (c,))
        return LinearModel(w, b)
    if kind == _KIND_CODES["mlp"]:
        c, d, h = struct.unpack_from("<III", raw, 5)
        off = 5 + 12
        w1, off = take(off, (h, d))
        b1, off = take(off, (h,))
        w2, off = take(off, (c, h))
        b2, off = take(off, (c,))
        return MlpModel(w1, b1, w2, b2)
    raise ValueError(f"{path}: unknown model kind code {kind}")
