"""Classification error, per-group false negative rates, and the FNR gap.

The gap |FNR(a=0) - FNR(a=1)| is the equality-of-opportunity disparity this
package trains against and reports everywhere.  A predictor with zero errors
on all positive rows necessarily has gap 0, which is what makes training-set
disparity vanish for any interpolating model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InterpolationNotFoundError, MissingSubgroupError, SpecError

__all__ = ["EvalReport", "evaluate", "interpolation_threshold"]


@dataclass(frozen=True)
class EvalReport:
    """Error rate, per-group FNRs, their gap, and the (y, a) cell counts."""

    error: float
    fnr_a0: float
    fnr_a1: float
    fnr_gap: float
    counts: dict[tuple[int, int], int]

    @property
    def n(self) -> int:
        return sum(self.counts.values())


def evaluate(predictions: np.ndarray, labels: np.ndarray, attrs: np.ndarray) -> EvalReport:
    """Misclassification rate and FNR gap of hard predictions.

    Raises :class:`MissingSubgroupError` when either positive subgroup is
    empty (the FNR would be undefined; callers decide their own policy).
    """
    pred = np.asarray(predictions)
    y = np.asarray(labels)
    a = np.asarray(attrs)
    if not (pred.shape == y.shape == a.shape) or pred.ndim != 1:
        raise SpecError("predictions, labels, attrs must be equal-length vectors")
    if pred.size == 0:
        raise SpecError("cannot evaluate an empty prediction set")

    fnr = {}
    counts = {}
    for g in (0, 1):
        pos = (y == 1) & (a == g)
        counts[(1, g)] = int(pos.sum())
        counts[(0, g)] = int(((y == 0) & (a == g)).sum())
        if counts[(1, g)] == 0:
            raise MissingSubgroupError(f"FNR undefined: no (y=1, a={g}) examples")
        fnr[g] = float((pred[pos] == 0).mean())

    return EvalReport(
        error=float((pred != y).mean()),
        fnr_a0=fnr[0],
        fnr_a1=fnr[1],
        fnr_gap=abs(fnr[0] - fnr[1]),
        counts=counts,
    )


def interpolation_threshold(
    train_errors: dict[int, float] | list[tuple[int, float]],
    tolerance: float = 0.0,
) -> int:
    """Smallest width whose train error is <= tolerance.

    ``train_errors`` maps width -> train error; widths must be strictly
    increasing.  Raises :class:`InterpolationNotFoundError` when no width
    qualifies.
    """
    items = list(train_errors.items()) if isinstance(train_errors, dict) else list(train_errors)
    if not items:
        raise SpecError("train-error table must be non-empty")
    widths = [w for w, _ in items]
    if any(b <= a for a, b in zip(widths, widths[1:])):
        raise SpecError("widths must be strictly increasing")
    for width, err in items:
        if err <= tolerance:
            return width
    raise InterpolationNotFoundError(
        f"no width interpolates: min train error {min(e for _, e in items):.6g} "
        f"> tolerance {tolerance:g}"
    )
