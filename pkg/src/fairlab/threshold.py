"""Post-hoc per-group threshold correction and Pareto fronts.

Grid search over per-group threshold pairs (tau_a0, tau_a1) on validation
scores: among pairs whose validation FNR gap is within the constraint,
pick the one with lowest validation error.  Thresholds chosen on validation
are then applied unchanged to the test split, giving the
fairness-constrained test error.

The search grid is uniform over [0, 1] with both endpoints included, so the
all-positive pair (0, 0) -- gap exactly 0 -- always makes the constraint
feasible.  Ties break deterministically: lowest error, then smallest gap,
then lexicographically smallest (tau_a0, tau_a1).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleConstraintError, MissingSubgroupError, SpecError

__all__ = [
    "ThresholdPair",
    "ThresholdChoice",
    "ConstrainedResult",
    "threshold_correct",
    "constrained_test_error",
    "pareto_front",
    "write_pareto_csv",
    "PARETO_CSV_COLUMNS",
]

# Slack absorbing floating-point counting noise in the constraint check.
GAP_SLACK = 1e-12

DEFAULT_GRID = 201


@dataclass(frozen=True)
class ThresholdPair:
    tau_a0: float
    tau_a1: float

    def __post_init__(self):
        for v in (self.tau_a0, self.tau_a1):
            if not 0.0 <= v <= 1.0:
                raise SpecError("thresholds must lie in [0, 1]")


@dataclass(frozen=True)
class ThresholdChoice:
    """Validation-side outcome of the grid search (precursor to test metrics)."""

    thresholds: ThresholdPair
    val_error: float
    val_fnr_gap: float
    feasible: bool


@dataclass(frozen=True)
class ConstrainedResult:
    """Thresholds tuned on validation plus their untouched test metrics."""

    thresholds: ThresholdPair
    val_error: float
    val_fnr_gap: float
    test_error: float
    test_fnr_gap: float
    constraint: float
    feasible: bool


def _group_tables(
    scores: np.ndarray, labels: np.ndarray, attrs: np.ndarray, grid: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-group error counts and FNRs at every grid threshold.

    Returns (err_counts[g, i], fnr[g, i], n_total); prediction is 1 where
    score >= tau.
    """
    err = np.empty((2, grid.size))
    fnr = np.empty((2, grid.size))
    for g in (0, 1):
        in_g = attrs == g
        pos = np.sort(scores[in_g & (labels == 1)])
        neg = np.sort(scores[in_g & (labels == 0)])
        if pos.size == 0:
            raise MissingSubgroupError(f"no (y=1, a={g}) rows: FNR undefined")
        # score < tau  <=>  predicted 0.
        pos_below = np.searchsorted(pos, grid, side="left")
        neg_below = np.searchsorted(neg, grid, side="left")
        err[g] = pos_below + (neg.size - neg_below)
        fnr[g] = pos_below / pos.size
    return err, fnr, scores.size


def _metrics_at(
    scores: np.ndarray,
    labels: np.ndarray,
    attrs: np.ndarray,
    pair: ThresholdPair,
) -> tuple[float, float]:
    """(error, fnr_gap) of the per-group thresholded predictor."""
    tau = np.where(attrs == 1, pair.tau_a1, pair.tau_a0)
    pred = scores >= tau
    fnr = []
    for g in (0, 1):
        pos = (labels == 1) & (attrs == g)
        if not pos.any():
            raise MissingSubgroupError(f"no (y=1, a={g}) rows: FNR undefined")
        fnr.append(float((~pred[pos]).mean()))
    return float((pred != (labels == 1)).mean()), abs(fnr[0] - fnr[1])


def threshold_correct(
    val_scores: np.ndarray,
    val_labels: np.ndarray,
    val_attrs: np.ndarray,
    thr: float,
    grid_resolution: int = DEFAULT_GRID,
) -> ThresholdChoice:
    """Search the threshold grid for the constrained validation optimum.

    Exhaustive over {0, 1/(g-1), ..., 1}^2; among pairs with validation FNR
    gap <= thr (plus 1e-12 slack) returns the lowest-error pair under the
    deterministic tie-break.  Raises
    :class:`InfeasibleConstraintError` if no pair qualifies (cannot happen
    with thr >= 0 since the grid contains (0, 0)).
    """
    if not 0.0 <= thr <= 1.0:
        raise SpecError("thr must lie in [0, 1]")
    if grid_resolution < 2:
        raise SpecError("grid_resolution must be >= 2")
    scores = np.asarray(val_scores, dtype=np.float64).ravel()
    labels = np.asarray(val_labels).ravel()
    attrs = np.asarray(val_attrs).ravel()
    if not (scores.size == labels.size == attrs.size) or scores.size == 0:
        raise SpecError("scores, labels, attrs must be equal-length and non-empty")

    grid = np.linspace(0.0, 1.0, grid_resolution)
    err, fnr, n = _group_tables(scores, labels, attrs, grid)
    err2d = (err[0][:, None] + err[1][None, :]) / n
    gap2d = np.abs(fnr[0][:, None] - fnr[1][None, :])
    feasible = gap2d <= thr + GAP_SLACK
    if not feasible.any():
        raise InfeasibleConstraintError(f"no grid pair satisfies FNR gap <= {thr}")

    # Tie-break: error, then gap, then lexicographic (tau_a0, tau_a1) --
    # realized by masking down to successive argmin sets and taking the first
    # remaining flat index (row-major == lexicographic in (i, j)).
    masked_err = np.where(feasible, err2d, np.inf)
    best_err = masked_err.min()
    in_best = masked_err == best_err
    masked_gap = np.where(in_best, gap2d, np.inf)
    best_gap = masked_gap.min()
    i, j = np.unravel_index(int(np.argmax(masked_gap == best_gap)), gap2d.shape)

    return ThresholdChoice(
        thresholds=ThresholdPair(float(grid[i]), float(grid[j])),
        val_error=float(err2d[i, j]),
        val_fnr_gap=float(gap2d[i, j]),
        feasible=True,
    )


def constrained_test_error(
    val_scores: np.ndarray,
    val_labels: np.ndarray,
    val_attrs: np.ndarray,
    test_scores: np.ndarray,
    test_labels: np.ndarray,
    test_attrs: np.ndarray,
    thr: float,
    grid_resolution: int = DEFAULT_GRID,
) -> ConstrainedResult:
    """Tune thresholds on validation, then report test metrics without re-tuning."""
    choice = threshold_correct(val_scores, val_labels, val_attrs, thr, grid_resolution)
    test_err, test_gap = _metrics_at(
        np.asarray(test_scores, dtype=np.float64).ravel(),
        np.asarray(test_labels).ravel(),
        np.asarray(test_attrs).ravel(),
        choice.thresholds,
    )
    return ConstrainedResult(
        thresholds=choice.thresholds,
        val_error=choice.val_error,
        val_fnr_gap=choice.val_fnr_gap,
        test_error=test_err,
        test_fnr_gap=test_gap,
        constraint=thr,
        feasible=choice.feasible,
    )


def pareto_front(
    val_scores: np.ndarray,
    val_labels: np.ndarray,
    val_attrs: np.ndarray,
    test_scores: np.ndarray,
    test_labels: np.ndarray,
    test_attrs: np.ndarray,
    thr_list: list[float],
    grid_resolution: int = DEFAULT_GRID,
) -> list[ConstrainedResult]:
    """One constrained result per constraint value (ascending thr expected).

    The validation-side constrained error is non-increasing in thr: weaker
    constraints only enlarge the feasible set.
    """
    if not thr_list:
        raise SpecError("thr_list must be non-empty")
    if any(b < a for a, b in zip(thr_list, thr_list[1:])):
        raise SpecError("thr_list must be sorted ascending")
    return [
        constrained_test_error(
            val_scores, val_labels, val_attrs,
            test_scores, test_labels, test_attrs,
            thr, grid_resolution,
        )
        for thr in thr_list
    ]


PARETO_CSV_COLUMNS = [
    "thr",
    "tau_a0",
    "tau_a1",
    "val_err",
    "val_gap",
    "test_err",
    "test_gap",
    "feasible",
]


def write_pareto_csv(results: list[ConstrainedResult], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(PARETO_CSV_COLUMNS)
        for r in results:
            writer.writerow(
                [
                    repr(float(r.constraint)),
                    repr(r.thresholds.tau_a0),
                    repr(r.thresholds.tau_a1),
                    repr(r.val_error),
                    repr(r.val_fnr_gap),
                    repr(r.test_error),
                    repr(r.test_fnr_gap),
                    int(r.feasible),
                ]
            )
