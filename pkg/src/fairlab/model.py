"""Width-controllable random-feature classifier.

A fixed Gaussian projection ``U`` (m x d, entries i.i.d. Normal(0, 1/d))
feeds a ReLU, and a trainable logistic head (weights ``w``, scalar bias)
reads the hidden features.  Only the head ever trains; ``U`` is frozen at
construction and marked read-only.  Width ``m`` is the capacity dial.

The 1/d entry variance keeps the hidden-feature scale roughly independent
of width and input dimension, so a single learning-rate default spans
widths from tens to thousands.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import SpecError

__all__ = [
    "RandomFeatureModel",
    "ModelOutputs",
    "init_model",
    "forward",
    "predict",
    "head_gradient",
    "save_checkpoint",
    "load_checkpoint",
    "sigmoid",
    "sigmoid_prime",
]

# Emitted probabilities are clamped into [PROB_EPS, 1 - PROB_EPS] so they are
# strictly inside (0, 1) even where float64 sigmoid saturates to 0.0 or 1.0.
PROB_EPS = 1e-12

_CHECKPOINT_VERSION = 1


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function (branch form, no overflow)."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid_prime(z: np.ndarray) -> np.ndarray:
    """d sigmoid / dz, computed as exp(-|z|) / (1 + exp(-|z|))^2 (stable)."""
    e = np.exp(-np.abs(np.asarray(z, dtype=np.float64)))
    return e / (1.0 + e) ** 2


@dataclass
class RandomFeatureModel:
    """Frozen projection plus trainable logistic head.

    ``projection`` is read-only; training code must replace ``head_weights``
    and ``head_bias`` (or use :func:`dataclasses.replace`) rather than touch
    the projection.
    """

    projection: np.ndarray
    head_weights: np.ndarray
    head_bias: float
    seed: int | None = field(default=None)

    def __post_init__(self):
        self.projection = np.asarray(self.projection, dtype=np.float64)
        self.projection.setflags(write=False)
        self.head_weights = np.asarray(self.head_weights, dtype=np.float64)
        if self.projection.ndim != 2:
            raise SpecError("projection must be an (m, d) matrix")
        if self.head_weights.shape != (self.projection.shape[0],):
            raise SpecError("head_weights length must equal model width")

    @property
    def width(self) -> int:
        return self.projection.shape[0]

    @property
    def input_dim(self) -> int:
        return self.projection.shape[1]

    def hidden(self, features: np.ndarray) -> np.ndarray:
        """ReLU random features, (batch, m)."""
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.input_dim:
            raise SpecError(
                f"feature width {features.shape[-1] if features.ndim else '?'} "
                f"does not match model input dim {self.input_dim}"
            )
        return np.maximum(features @ self.projection.T, 0.0)


@dataclass(frozen=True)
class ModelOutputs:
    """Per-example probabilities plus the hidden features that produced them."""

    probabilities: np.ndarray
    hidden: np.ndarray


def init_model(width: int, input_dim: int, seed: int) -> RandomFeatureModel:
    """Fresh model: U ~ Normal(0, 1/d) entries, zero head.

    The zero head makes the untrained model predict exactly 0.5 everywhere,
    i.e. a random (and group-blind) predictor.  Deterministic given seed.
    """
    if width < 1 or input_dim < 1:
        raise SpecError("width and input_dim must be >= 1")
    rng = np.random.default_rng(seed)
    projection = rng.normal(0.0, 1.0 / np.sqrt(input_dim), size=(width, input_dim))
    return RandomFeatureModel(
        projection=projection,
        head_weights=np.zeros(width),
        head_bias=0.0,
        seed=seed,
    )


def forward(model: RandomFeatureModel, features: np.ndarray) -> ModelOutputs:
    """Probabilities sigmoid(w . ReLU(U x) + bias), hidden features retained."""
    hidden = model.hidden(features)
    z = hidden @ model.head_weights + model.head_bias
    p = np.clip(sigmoid(z), PROB_EPS, 1.0 - PROB_EPS)
    return ModelOutputs(probabilities=p, hidden=hidden)


def predict(model: RandomFeatureModel, features: np.ndarray, threshold: float) -> np.ndarray:
    """Binary predictions: 1 where probability >= threshold (ties count as 1)."""
    if not 0.0 <= threshold <= 1.0:
        raise SpecError("threshold must lie in [0, 1]")
    return (forward(model, features).probabilities >= threshold).astype(np.int64)


def head_gradient(
    model: RandomFeatureModel, features: np.ndarray, upstream: np.ndarray
) -> tuple[np.ndarray, float]:
    """Chain rule through the sigmoid head.

    ``upstream`` holds dL/dp per example; returns
    (sum_i upstream_i * p_i (1-p_i) * hidden_i, analogous bias term).
    """
    hidden = model.hidden(features)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (hidden.shape[0],):
        raise SpecError("upstream length must equal batch size")
    z = hidden @ model.head_weights + model.head_bias
    dz = upstream * sigmoid_prime(z)
    return hidden.T @ dz, float(dz.sum())


def save_checkpoint(model: RandomFeatureModel, path) -> None:
    """Versioned JSON checkpoint.

    When the model carries its init seed, only the seed is stored and the
    projection is regenerated bitwise on load; otherwise the full matrix is
    written.  Head values use shortest round-trip float encoding.
    """
    record = {
        "version": _CHECKPOINT_VERSION,
        "width": model.width,
        "input_dim": model.input_dim,
        "head_weights": [float(v) for v in model.head_weights],
        "head_bias": float(model.head_bias),
    }
    if model.seed is not None:
        record["seed"] = model.seed
    else:
        record["projection"] = [[float(v) for v in row] for row in model.projection]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh)


def load_checkpoint(path) -> RandomFeatureModel:
    with open(path, encoding="utf-8") as fh:
        record = json.load(fh)
    if record.get("version") != _CHECKPOINT_VERSION:
        raise SpecError(f"unsupported checkpoint version {record.get('version')!r}")
    width, input_dim = record["width"], record["input_dim"]
    if "seed" in record:
        model = init_model(width, input_dim, record["seed"])
    else:
        model = RandomFeatureModel(
            projection=np.asarray(record["projection"], dtype=np.float64),
            head_weights=np.zeros(width),
            head_bias=0.0,
            seed=None,
        )
    return replace(
        model,
        head_weights=np.asarray(record["head_weights"], dtype=np.float64),
        head_bias=float(record["head_bias"]),
    )
