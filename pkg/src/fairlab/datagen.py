"""Synthetic spurious-correlation datasets and CSV import/export.

The generator produces feature vectors with three blocks:

* a *core* block whose mean tracks the label ``y``,
* a *spurious* block whose mean tracks the sensitive attribute ``a``,
* a pure-noise block.

Because ``a`` agrees with ``y`` on a majority of rows, a classifier can
lean on the spurious block and look accurate while failing the minority
subgroups -- the structure needed to study disparity-penalized training.

CSV schema (the single external data format): header ``f0,...,f{d-1},y,a``,
UTF-8, ``.`` decimal, one example per row, ``y`` and ``a`` in {0, 1}.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import CsvFormatError, SpecError

__all__ = [
    "GroupedDataset",
    "SpuriousSpec",
    "SplitSpec",
    "generate_spurious",
    "split",
    "load_csv",
    "save_csv",
]


@dataclass(frozen=True)
class GroupedDataset:
    """Feature matrix with per-row binary label and binary sensitive attribute.

    ``features`` is (N, d) float64; ``labels`` and ``attrs`` are length-N
    integer vectors containing only 0 or 1.
    """

    features: np.ndarray
    labels: np.ndarray
    attrs: np.ndarray

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        attrs = np.asarray(self.attrs, dtype=np.int64)
        if features.ndim != 2:
            raise SpecError("features must be a 2-D matrix")
        if labels.shape != (features.shape[0],) or attrs.shape != (features.shape[0],):
            raise SpecError("features, labels, attrs must have the same number of rows")
        for name, v in (("labels", labels), ("attrs", attrs)):
            if v.size and not np.isin(v, (0, 1)).all():
                raise SpecError(f"{name} must contain only 0 or 1")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "attrs", attrs)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, indices: np.ndarray) -> "GroupedDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return GroupedDataset(self.features[idx], self.labels[idx], self.attrs[idx])

    def group_indices(self, y: int, a: int) -> np.ndarray:
        """Row indices of the (y, a) cell."""
        return np.flatnonzero((self.labels == y) & (self.attrs == a))

    def has_positive_subgroups(self) -> bool:
        """True when both (y=1, a=0) and (y=1, a=1) are non-empty."""
        return self.group_indices(1, 0).size > 0 and self.group_indices(1, 1).size > 0


# (y, a) cell enumeration order used for quotas and stratified splits.
_CELLS = ((0, 0), (0, 1), (1, 0), (1, 1))


@dataclass(frozen=True)
class SpuriousSpec:
    """Parameters of the synthetic spurious-correlation generator.

    ``majority_fraction`` is the probability that the sensitive attribute
    agrees with the label (``a = y``); the remaining rows get ``a = 1 - y``.
    With ``stratified=True`` (default) the four (y, a) cell sizes are exact
    largest-remainder quotas of their probabilities, so tiny fixtures are
    deterministic and every cell is populated; with ``stratified=False``
    cell membership is drawn i.i.d.
    """

    n_total: int
    d_core: int
    d_spur: int
    d_noise: int
    core_mean: float
    spur_mean: float
    noise_sigma: float
    majority_fraction: float
    positive_fraction: float
    seed: int
    stratified: bool = True

    @property
    def d(self) -> int:
        return self.d_core + self.d_spur + self.d_noise

    def validate(self) -> None:
        if self.n_total < 4:
            raise SpecError("n_total must be >= 4")
        if min(self.d_core, self.d_spur, self.d_noise) < 0 or self.d < 1:
            raise SpecError("block dimensions must be non-negative and sum to >= 1")
        if not self.noise_sigma > 0:
            raise SpecError("noise_sigma must be > 0")
        if not 0.5 < self.majority_fraction <= 1.0:
            raise SpecError("majority_fraction must lie in (0.5, 1]")
        if not 0.0 < self.positive_fraction < 1.0:
            raise SpecError("positive_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class SplitSpec:
    """Train/validation/test fractions plus the shuffling seed."""

    train_fraction: float
    val_fraction: float
    test_fraction: float
    seed: int
    stratified: bool = True

    @property
    def fractions(self) -> tuple[float, float, float]:
        return (self.train_fraction, self.val_fraction, self.test_fraction)

    def validate(self) -> None:
        for f in self.fractions:
            if not 0.0 < f < 1.0:
                raise SpecError("split fractions must each lie in (0, 1)")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise SpecError("split fractions must sum to 1")


def _largest_remainder(n: int, probs: np.ndarray) -> np.ndarray:
    """Integer quotas summing to n, proportional to probs (largest remainder)."""
    exact = n * probs
    counts = np.floor(exact).astype(np.int64)
    remainder = exact - counts
    short = n - int(counts.sum())
    # Ties broken by lowest index for determinism.
    order = np.lexsort((np.arange(len(probs)), -remainder))
    counts[order[:short]] += 1
    return counts


def generate_spurious(spec: SpuriousSpec) -> GroupedDataset:
    """Draw a dataset from the spurious-correlation model.

    Per row: ``y = 1`` with probability ``positive_fraction``; ``a = y`` with
    probability ``majority_fraction`` else ``a = 1 - y``.  Feature blocks are
    Gaussian with per-coordinate means ``core_mean * (2y - 1)``,
    ``spur_mean * (2a - 1)``, and 0, all with std ``noise_sigma``.
    Pure function of the spec: the same spec yields a bit-identical dataset.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)

    pf, mf = spec.positive_fraction, spec.majority_fraction
    if spec.stratified:
        cell_probs = np.array(
            [(1 - pf) * mf, (1 - pf) * (1 - mf), pf * (1 - mf), pf * mf]
        )
        counts = _largest_remainder(spec.n_total, cell_probs)
        # Guarantee every positive-probability cell is populated (possible
        # since n_total >= 4); zero-probability cells stay empty.
        needy = (counts == 0) & (cell_probs > 0)
        while needy.any():
            counts[int(np.argmax(counts))] -= 1
            counts[int(np.argmax(needy))] += 1
            needy = (counts == 0) & (cell_probs > 0)
        labels = np.concatenate([np.full(c, y, dtype=np.int64) for (y, _), c in zip(_CELLS, counts)])
        attrs = np.concatenate([np.full(c, a, dtype=np.int64) for (_, a), c in zip(_CELLS, counts)])
        perm = rng.permutation(spec.n_total)
        labels, attrs = labels[perm], attrs[perm]
    else:
        labels = (rng.random(spec.n_total) < pf).astype(np.int64)
        aligned = rng.random(spec.n_total) < mf
        attrs = np.where(aligned, labels, 1 - labels)

    y_sign = (2 * labels - 1).astype(np.float64)[:, None]
    a_sign = (2 * attrs - 1).astype(np.float64)[:, None]
    noise = rng.standard_normal((spec.n_total, spec.d)) * spec.noise_sigma
    means = np.hstack(
        [
            np.broadcast_to(spec.core_mean * y_sign, (spec.n_total, spec.d_core)),
            np.broadcast_to(spec.spur_mean * a_sign, (spec.n_total, spec.d_spur)),
            np.zeros((spec.n_total, spec.d_noise)),
        ]
    )
    return GroupedDataset(means + noise, labels, attrs)


def split(
    data: GroupedDataset, spec: SplitSpec
) -> tuple[GroupedDataset, GroupedDataset, GroupedDataset]:
    """Partition rows into train/val/test subsets.

    The three index sets are disjoint and cover the input.  When
    ``stratified`` is set, every (y, a) cell is partitioned separately so its
    per-split proportions match the fractions to within one sample; each
    non-empty cell must be able to place at least one row in every split.
    Deterministic given ``spec.seed``.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    fractions = np.array(spec.fractions)

    def allocate(indices: np.ndarray, what: str) -> list[np.ndarray]:
        if len(indices) < 3:
            raise SpecError(
                f"{what} has {len(indices)} rows; need >= 3 to cover all three splits"
            )
        counts = _largest_remainder(len(indices), fractions)
        if (counts == 0).any():
            raise SpecError(
                f"{what} has {len(indices)} rows; too small to place one sample per split"
            )
        shuffled = rng.permutation(indices)
        bounds = np.cumsum(counts)[:2]
        return np.split(shuffled, bounds)

    if spec.stratified:
        parts: list[list[np.ndarray]] = [[], [], []]
        for y, a in _CELLS:
            cell = data.group_indices(y, a)
            if cell.size == 0:
                continue
            for bucket, chunk in zip(parts, allocate(cell, f"group (y={y}, a={a})")):
                bucket.append(chunk)
        pieces = [np.sort(np.concatenate(p)) for p in parts]
    else:
        pieces = allocate(np.arange(data.n), "dataset")
        pieces = [np.sort(p) for p in pieces]

    return tuple(data.subset(p) for p in pieces)  # type: ignore[return-value]


def _expected_header(d: int) -> list[str]:
    return [f"f{i}" for i in range(d)] + ["y", "a"]


def load_csv(path) -> GroupedDataset:
    """Load a dataset from the ``f0..f{d-1},y,a`` CSV schema.

    Raises :class:`CsvFormatError` with the offending 1-based data row number
    on malformed numeric fields or labels outside {0, 1}.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError("empty file: missing header") from None
        header = [h.strip() for h in header]
        if len(header) < 3 or header[-2:] != ["y", "a"]:
            raise CsvFormatError("header must be f0,...,f{d-1},y,a")
        d = len(header) - 2
        if header[:d] != [f"f{i}" for i in range(d)]:
            raise CsvFormatError("feature columns must be named f0..f{d-1} in order")

        features, labels, attrs = [], [], []
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != d + 2:
                raise CsvFormatError(
                    f"expected {d + 2} fields, found {len(row)}", row=row_no
                )
            try:
                features.append([float(v) for v in row[:d]])
            except ValueError as exc:
                raise CsvFormatError(f"malformed numeric field ({exc})", row=row_no) from None
            for name, raw in (("y", row[d]), ("a", row[d + 1])):
                if raw.strip() not in ("0", "1"):
                    raise CsvFormatError(
                        f"{name} must be 0 or 1, found {raw!r}", row=row_no
                    )
            labels.append(int(row[d]))
            attrs.append(int(row[d + 1]))

    return GroupedDataset(
        np.asarray(features, dtype=np.float64).reshape(len(labels), d),
        np.asarray(labels, dtype=np.int64),
        np.asarray(attrs, dtype=np.int64),
    )


def save_csv(data: GroupedDataset, path) -> None:
    """Write a dataset in the CSV schema; floats use shortest round-trip form."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_expected_header(data.d))
        for x, y, a in zip(data.features, data.labels, data.attrs):
            writer.writerow([repr(float(v)) for v in x] + [int(y), int(a)])
