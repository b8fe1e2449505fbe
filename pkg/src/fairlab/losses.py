"""Training objectives and their gradients with respect to the head.

The total objective is

    total = effective_primary + lambda * mindiff + weight_decay_penalty

where ``effective_primary`` is the binary cross-entropy, optionally passed
through the flooding transform |L - b| + b, and ``mindiff`` is the squared
maximum mean discrepancy between the score distributions of the two
positive-label subgroups.  MMD^2 is the biased V-statistic, which is
differentiable everywhere and well-defined even for subgroup size 1.

Numerics: cross-entropy values and gradients are computed from logits in
stable form; probabilities are clamped into [1e-12, 1-1e-12] only inside
logarithms.  At the flooding kink L == b the descent subgradient (+1) is
used.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datagen import GroupedDataset
from .errors import MissingSubgroupError, SpecError
from .model import RandomFeatureModel, sigmoid, sigmoid_prime

__all__ = [
    "KernelSpec",
    "LossBreakdown",
    "DEFAULT_KERNEL",
    "bce_loss",
    "mmd_squared",
    "mindiff_loss",
    "flood_transform",
    "weight_decay_penalty",
    "total_loss_and_gradient",
]

_LOG_EPS = 1e-12


@dataclass(frozen=True)
class KernelSpec:
    """Scalar kernel on the (0,1) output space: gaussian or laplace."""

    family: str = "gaussian"
    bandwidth: float = 0.5

    def validate(self) -> None:
        if self.family not in ("gaussian", "laplace"):
            raise SpecError(f"unknown kernel family {self.family!r}")
        if not self.bandwidth > 0:
            raise SpecError("kernel bandwidth must be > 0")

    def gram(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Kernel matrix k(x_i, y_j)."""
        diff = np.subtract.outer(x, y)
        if self.family == "gaussian":
            return np.exp(-(diff**2) / (2.0 * self.bandwidth**2))
        return np.exp(-np.abs(diff) / self.bandwidth)

    def gram_deriv(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """d k(x_i, y_j) / d x_i."""
        diff = np.subtract.outer(x, y)
        if self.family == "gaussian":
            s2 = self.bandwidth**2
            return -(diff / s2) * np.exp(-(diff**2) / (2.0 * s2))
        # Subgradient 0 at diff == 0 (sign(0) == 0).
        return -(np.sign(diff) / self.bandwidth) * np.exp(-np.abs(diff) / self.bandwidth)


DEFAULT_KERNEL = KernelSpec("gaussian", 0.5)


@dataclass(frozen=True)
class LossBreakdown:
    """Scalar pieces of one total-loss evaluation.

    ``total`` always equals ``effective_primary + lambda * mindiff +
    weight_decay`` where ``effective_primary`` applies the flooding
    transform when a flood level is set.
    """

    primary: float
    mindiff: float
    total: float
    lambda_: float
    flood_level: float | None = None
    weight_decay: float = 0.0

    @property
    def effective_primary(self) -> float:
        if self.flood_level is None:
            return self.primary
        return flood_transform(self.primary, self.flood_level)

    def recomputed_total(self) -> float:
        return self.effective_primary + self.lambda_ * self.mindiff + self.weight_decay


def bce_loss(probabilities: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross-entropy -[y log p + (1-y) log(1-p)].

    Probabilities are clamped to [1e-12, 1-1e-12] inside the logarithms only.
    """
    p = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.size == 0:
        raise SpecError("bce_loss requires a non-empty batch")
    if p.shape != y.shape:
        raise SpecError("probabilities and labels must have equal length")
    pc = np.clip(p, _LOG_EPS, 1.0 - _LOG_EPS)
    return float(-np.mean(y * np.log(pc) + (1.0 - y) * np.log1p(-pc)))


def _bce_from_logits(z: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """(mean BCE, d mean BCE / dz per example) in stable logit form."""
    n = z.size
    per_example = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    dz = (sigmoid(z) - y) / n
    return float(per_example.mean()), dz


def mmd_squared(s: np.ndarray, t: np.ndarray, kernel: KernelSpec = DEFAULT_KERNEL) -> float:
    """Biased V-statistic MMD^2 between two score samples, clamped at 0.

    mean_ij k(s_i, s_j) + mean_ij k(t_i, t_j) - 2 mean_ij k(s_i, t_j);
    symmetric in (s, t) and exactly 0 when the samples coincide.
    """
    kernel.validate()
    s = np.asarray(s, dtype=np.float64).ravel()
    t = np.asarray(t, dtype=np.float64).ravel()
    if s.size == 0 or t.size == 0:
        raise SpecError("mmd_squared requires non-empty vectors")
    value = (
        kernel.gram(s, s).mean()
        + kernel.gram(t, t).mean()
        - 2.0 * kernel.gram(s, t).mean()
    )
    return max(float(value), 0.0)


def _mmd_squared_with_grad(
    s: np.ndarray, t: np.ndarray, kernel: KernelSpec
) -> tuple[float, np.ndarray, np.ndarray]:
    """MMD^2 (unclamped) and its gradients with respect to each sample point."""
    ns, nt = s.size, t.size
    k_ss = kernel.gram(s, s)
    k_tt = kernel.gram(t, t)
    k_st = kernel.gram(s, t)
    value = float(k_ss.mean() + k_tt.mean() - 2.0 * k_st.mean())
    # d/ds_a mean_ij k(s_i,s_j) = (2/ns^2) sum_j d1 k(s_a, s_j); likewise for t.
    ds = 2.0 * kernel.gram_deriv(s, s).sum(axis=1) / ns**2
    ds -= 2.0 * kernel.gram_deriv(s, t).sum(axis=1) / (ns * nt)
    dt = 2.0 * kernel.gram_deriv(t, t).sum(axis=1) / nt**2
    dt -= 2.0 * kernel.gram_deriv(t, s).sum(axis=1) / (ns * nt)
    return value, ds, dt


def mindiff_loss(
    outputs: np.ndarray,
    labels: np.ndarray,
    attrs: np.ndarray,
    kernel: KernelSpec = DEFAULT_KERNEL,
) -> float:
    """MMD^2 between the positive-label score distributions of the two groups."""
    outputs = np.asarray(outputs, dtype=np.float64)
    labels = np.asarray(labels)
    attrs = np.asarray(attrs)
    s = outputs[(labels == 1) & (attrs == 0)]
    t = outputs[(labels == 1) & (attrs == 1)]
    if s.size == 0 or t.size == 0:
        raise MissingSubgroupError(
            "mindiff_loss requires both (y=1, a=0) and (y=1, a=1) in the batch"
        )
    return mmd_squared(s, t, kernel)


def flood_transform(primary: float, flood_level: float) -> float:
    """Flooding: |L - b| + b.  Identity above b, reflected below."""
    return abs(primary - flood_level) + flood_level


def weight_decay_penalty(model: RandomFeatureModel, strength: float) -> float:
    """L2 penalty strength * (||w||^2 + bias^2) / 2 on the trainable head."""
    if strength < 0:
        raise SpecError("weight decay strength must be >= 0")
    w, b = model.head_weights, model.head_bias
    return 0.5 * strength * (float(w @ w) + b * b)


def total_loss_and_gradient(
    model: RandomFeatureModel,
    primary_batch: GroupedDataset,
    mindiff_batch: GroupedDataset | None,
    config,
) -> tuple[LossBreakdown, np.ndarray, float]:
    """Total MinDiff objective and exact head gradient on raw feature batches.

    ``config`` needs attributes ``lambda_``, ``kernel``, ``flood_level`` and
    ``weight_decay`` (a TrainConfig works).  Returns (breakdown, grad_w,
    grad_bias) where the gradient differentiates exactly the returned total,
    including the primary-loss sign flip on the flooding ascent branch.
    """
    hidden_p = model.hidden(primary_batch.features)
    hidden_m = None
    if mindiff_batch is not None and mindiff_batch.n > 0:
        hidden_m = model.hidden(mindiff_batch.features)
    breakdown, grad_w, grad_b = total_loss_and_gradient_hidden(
        model.head_weights,
        model.head_bias,
        hidden_p,
        primary_batch.labels,
        hidden_m,
        None if mindiff_batch is None else mindiff_batch.labels,
        None if mindiff_batch is None else mindiff_batch.attrs,
        lambda_=config.lambda_,
        kernel=config.kernel,
        flood_level=config.flood_level,
        weight_decay=config.weight_decay,
    )
    return breakdown, grad_w, grad_b


def total_loss_and_gradient_hidden(
    w: np.ndarray,
    bias: float,
    hidden_p: np.ndarray,
    labels_p: np.ndarray,
    hidden_m: np.ndarray | None,
    labels_m: np.ndarray | None,
    attrs_m: np.ndarray | None,
    *,
    lambda_: float,
    kernel: KernelSpec,
    flood_level: float | None,
    weight_decay: float,
) -> tuple[LossBreakdown, np.ndarray, float]:
    """Same objective on precomputed hidden features (training fast path)."""
    if hidden_p.shape[0] == 0:
        raise SpecError("primary batch must be non-empty")
    y_p = np.asarray(labels_p, dtype=np.float64)
    z_p = hidden_p @ w + bias
    lp, dz_p = _bce_from_logits(z_p, y_p)

    sign = 1.0
    effective = lp
    if flood_level is not None:
        effective = flood_transform(lp, flood_level)
        if lp < flood_level:
            sign = -1.0
    grad_w = sign * (hidden_p.T @ dz_p)
    grad_b = sign * float(dz_p.sum())

    lm = 0.0
    if hidden_m is not None and hidden_m.shape[0] > 0:
        mask_s = (np.asarray(labels_m) == 1) & (np.asarray(attrs_m) == 0)
        mask_t = (np.asarray(labels_m) == 1) & (np.asarray(attrs_m) == 1)
        if lambda_ > 0 and (not mask_s.any() or not mask_t.any()):
            raise MissingSubgroupError(
                "MinDiff batch must contain both positive subgroups when lambda > 0"
            )
        if mask_s.any() and mask_t.any():
            z_m = hidden_m @ w + bias
            p_m = sigmoid(z_m)
            lm, ds, dt = _mmd_squared_with_grad(p_m[mask_s], p_m[mask_t], kernel)
            lm = max(lm, 0.0)
            if lambda_ > 0:
                dp = np.zeros_like(p_m)
                dp[mask_s] = ds
                dp[mask_t] = dt
                dz_m = dp * sigmoid_prime(z_m)
                grad_w += lambda_ * (hidden_m.T @ dz_m)
                grad_b += lambda_ * float(dz_m.sum())
    elif lambda_ > 0:
        raise MissingSubgroupError("lambda > 0 requires a MinDiff batch")

    wd = 0.5 * weight_decay * (float(w @ w) + bias * bias)
    if weight_decay > 0:
        grad_w = grad_w + weight_decay * w
        grad_b += weight_decay * bias

    total = effective + lambda_ * lm + wd
    breakdown = LossBreakdown(
        primary=lp,
        mindiff=lm,
        total=total,
        lambda_=lambda_,
        flood_level=flood_level,
        weight_decay=wd,
    )
    return breakdown, grad_w, grad_b
