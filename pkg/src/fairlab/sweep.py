"""Experiment orchestration: width x lambda x regularizer x seed grids.

Each grid cell trains one fresh model per replicate seed, evaluates raw
(tau = 0.5) and fairness-constrained metrics, and aggregates per-cell means
with 95% Student-t confidence half-widths.  Runs are embarrassingly
parallel; ``FAIRLAB_THREADS`` caps the process pool.  Everything is
deterministic given the config: per-run RNG streams are derived by feeding
(replicate seed, width, lambda bit pattern, regularizer label) into a
``numpy.random.SeedSequence``, so cells are independent and permuting the
seed list only permutes per-run records.

Named presets cover the experiment families this package exists for:
double-descent width sweeps, penalty-weight sweeps, training-dynamics
traces, constrained-error fronts, batch sizing, and regularizer shootouts,
all scaled to a desk-size synthetic fixture.
"""

from __future__ import annotations

import csv
import json
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .datagen import GroupedDataset, SplitSpec, SpuriousSpec, generate_spurious, load_csv, split
from .errors import FairlabError, SpecError
from .metrics import evaluate
from .model import forward, init_model
from .threshold import constrained_test_error
from .trainer import EarlyStoppingSpec, TrainConfig, TrainedModel, train
from .losses import KernelSpec

__all__ = [
    "Regularizer",
    "SweepConfig",
    "CellSummary",
    "RunRecord",
    "aggregate",
    "run_sweep",
    "execute_run",
    "preset",
    "PRESET_NAMES",
    "write_results_csv",
    "config_to_json",
    "config_from_json",
    "load_config",
    "resolve_datasets",
    "RESULTS_CSV_COLUMNS",
]

REGULARIZER_KINDS = ("none", "weight_decay", "early_stopping", "flooding", "batch_size")


@dataclass(frozen=True)
class Regularizer:
    """One training-recipe variant in a sweep grid.

    kind/value pairs: ``none`` (value ignored), ``weight_decay`` (strength),
    ``flooding`` (flood level b), ``batch_size`` (primary batch size),
    ``early_stopping`` (criterion name, "primary" or "total").
    """

    kind: str = "none"
    value: float | int | str | None = None

    def validate(self) -> None:
        if self.kind not in REGULARIZER_KINDS:
            raise SpecError(f"unknown regularizer kind {self.kind!r}")
        if self.kind == "weight_decay" and not float(self.value) >= 0:
            raise SpecError("weight_decay strength must be >= 0")
        if self.kind == "flooding" and not float(self.value) >= 0:
            raise SpecError("flood level must be >= 0")
        if self.kind == "batch_size" and int(self.value) < 1:
            raise SpecError("batch size must be >= 1")
        if self.kind == "early_stopping" and self.value not in ("primary", "total"):
            raise SpecError("early_stopping value must be 'primary' or 'total'")

    @property
    def label(self) -> str:
        if self.kind == "none":
            return "none"
        short = {"weight_decay": "wd", "early_stopping": "es", "flooding": "fl", "batch_size": "bs"}
        v = f"{self.value:g}" if isinstance(self.value, (int, float)) else str(self.value)
        return f"{short[self.kind]}={v}"

    def apply(self, config: TrainConfig) -> TrainConfig:
        if self.kind == "none":
            return config
        if self.kind == "weight_decay":
            return replace(config, weight_decay=float(self.value))
        if self.kind == "flooding":
            return replace(config, flood_level=float(self.value))
        if self.kind == "batch_size":
            return replace(config, batch_size=int(self.value))
        criterion = "primary_val_loss" if self.value == "primary" else "total_val_loss"
        return replace(config, early_stopping=EarlyStoppingSpec(criterion=criterion))


@dataclass(frozen=True)
class SweepConfig:
    widths: tuple[int, ...]
    lambdas: tuple[float, ...]
    regularizers: tuple[Regularizer, ...]
    seeds: tuple[int, ...]
    train: TrainConfig
    thr_values: tuple[float, ...]
    data: SpuriousSpec | None = None
    split_spec: SplitSpec | None = None
    data_csv: str | None = None

    def validate(self) -> None:
        if not self.widths or not self.lambdas or not self.regularizers or not self.seeds:
            raise SpecError("widths, lambdas, regularizers, seeds must be non-empty")
        if any(b <= a for a, b in zip(self.widths, self.widths[1:])):
            raise SpecError("widths must be strictly increasing")
        if any(s < 0 for s in self.seeds):
            raise SpecError("seeds must be non-negative")
        if any(l < 0 for l in self.lambdas):
            raise SpecError("lambdas must be >= 0")
        for reg in self.regularizers:
            reg.validate()
        if self.data is None and self.data_csv is None:
            raise SpecError("config needs either a data spec or a data_csv path")
        if self.split_spec is None:
            raise SpecError("config needs a split spec")
        self.train.validate()


@dataclass(frozen=True)
class RunRecord:
    """Metrics of a single trained replicate."""

    width: int
    lambda_: float
    regularizer: str
    seed: int
    metrics: dict[str, float]


@dataclass(frozen=True)
class CellSummary:
    """Per-cell aggregation over replicate seeds: metric -> (mean, ci95)."""

    width: int
    lambda_: float
    regularizer: str
    metrics: dict[str, tuple[float, float]]
    n_runs: int
    failures: tuple[str, ...] = ()


def aggregate(values) -> tuple[float, float]:
    """Sample mean and 95% Student-t confidence half-width.

    Half-width is t_{0.975, n-1} * s / sqrt(n) for n >= 2 and exactly 0 for
    a single value.
    """
    v = np.asarray(list(values), dtype=np.float64)
    if v.size == 0:
        raise SpecError("aggregate requires a non-empty list")
    mean = float(v.mean())
    if v.size == 1:
        return mean, 0.0
    half = float(stats.t.ppf(0.975, v.size - 1) * v.std(ddof=1) / np.sqrt(v.size))
    return mean, half


def derive_run_seeds(seed: int, width: int, lambda_: float, reg_label: str) -> tuple[int, int]:
    """(model seed, batch seed) for one run, mixed from the cell coordinates.

    Entropy feeds a SeedSequence with the replicate seed, the width, the
    IEEE-754 bit pattern of lambda, and a CRC-32 of the regularizer label.
    """
    entropy = [
        int(seed),
        int(width),
        int(np.float64(lambda_).view(np.uint64)),
        zlib.crc32(reg_label.encode("utf-8")),
    ]
    state = np.random.SeedSequence(entropy).generate_state(2, np.uint64)
    return int(state[0]), int(state[1])


def resolve_datasets(config: SweepConfig) -> tuple[GroupedDataset, GroupedDataset, GroupedDataset]:
    """Materialize the (train, val, test) splits a sweep runs against."""
    base = load_csv(config.data_csv) if config.data_csv else generate_spurious(config.data)
    return split(base, config.split_spec)


# Canonical metric order for CSV output; constrained metrics follow in
# thr order.
_BASE_METRICS = [
    "train_err",
    "train_fnr_gap",
    "val_err",
    "val_fnr_gap",
    "test_err",
    "test_fnr_gap",
    "train_lp_final",
]


def _constrained_names(thr: float) -> tuple[str, str]:
    return f"constrained_err@{thr:g}", f"constrained_gap@{thr:g}"


def execute_run(
    datasets: tuple[GroupedDataset, GroupedDataset, GroupedDataset],
    width: int,
    lambda_: float,
    regularizer: Regularizer,
    seed: int,
    base_train: TrainConfig,
    thr_values: tuple[float, ...],
    keep_trained: bool = False,
) -> RunRecord | tuple[RunRecord, TrainedModel]:
    """Train and evaluate one replicate; pure function of its arguments."""
    train_data, val_data, test_data = datasets
    model_seed, batch_seed = derive_run_seeds(seed, width, lambda_, regularizer.label)
    model = init_model(width, train_data.d, model_seed)
    cfg = regularizer.apply(replace(base_train, lambda_=lambda_, seed=batch_seed))
    result = train(model, train_data, val_data, cfg)

    metrics: dict[str, float] = {}
    scores = {}
    for name, ds in (("train", train_data), ("val", val_data), ("test", test_data)):
        p = forward(result.model, ds.features).probabilities
        scores[name] = p
        report = evaluate((p >= 0.5).astype(np.int64), ds.labels, ds.attrs)
        metrics[f"{name}_err"] = report.error
        metrics[f"{name}_fnr_gap"] = report.fnr_gap
    metrics["train_lp_final"] = float(result.trace.train_lp[-1])
    for thr in thr_values:
        c = constrained_test_error(
            scores["val"], val_data.labels, val_data.attrs,
            scores["test"], test_data.labels, test_data.attrs,
            thr,
        )
        err_name, gap_name = _constrained_names(thr)
        metrics[err_name] = c.test_error
        metrics[gap_name] = c.test_fnr_gap

    record = RunRecord(width, lambda_, regularizer.label, seed, metrics)
    return (record, result) if keep_trained else record


_POOL_STATE: dict = {}


def _pool_init(datasets, base_train, thr_values):
    _POOL_STATE["args"] = (datasets, base_train, thr_values)


def _pool_run(task):
    width, lambda_, reg, seed = task
    datasets, base_train, thr_values = _POOL_STATE["args"]
    try:
        return task, execute_run(datasets, width, lambda_, reg, seed, base_train, thr_values), None
    except FairlabError as exc:
        return task, None, f"{type(exc).__name__}: {exc}"


def _worker_count(n_tasks: int) -> int:
    env = os.environ.get("FAIRLAB_THREADS")
    workers = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(workers, n_tasks))


def run_sweep(config: SweepConfig, workers: int | None = None) -> list[CellSummary]:
    """Run every (width, lambda, regularizer, seed) cell and aggregate.

    Individual run failures are recorded on the cell, not fatal; a cell
    where every replicate fails raises.  Output order and values are
    deterministic and independent of scheduling.
    """
    config.validate()
    datasets = resolve_datasets(config)
    cells = [
        (w, lam, reg)
        for w in config.widths
        for lam in config.lambdas
        for reg in config.regularizers
    ]
    tasks = [(w, lam, reg, s) for (w, lam, reg) in cells for s in config.seeds]
    n_workers = _worker_count(len(tasks)) if workers is None else max(1, workers)

    outcomes: dict[tuple, tuple[RunRecord | None, str | None]] = {}
    if n_workers == 1:
        _pool_init(datasets, config.train, config.thr_values)
        for task in tasks:
            key, record, failure = _pool_run(task)
            outcomes[key] = (record, failure)
    else:
        with ProcessPoolExecutor(
            max_workers=n_workers,
            initializer=_pool_init,
            initargs=(datasets, config.train, config.thr_values),
        ) as pool:
            for key, record, failure in pool.map(_pool_run, tasks, chunksize=1):
                outcomes[key] = (record, failure)

    summaries = []
    for w, lam, reg in cells:
        records, failures = [], []
        # Canonical per-cell order: sorted by seed value, so aggregates are
        # bitwise independent of the seed list's ordering.
        for s in sorted(set(config.seeds)):
            record, failure = outcomes[(w, lam, reg, s)]
            if record is not None:
                records.extend([record] * config.seeds.count(s))
            else:
                failures.append(f"seed {s}: {failure}")
        if not records:
            raise FairlabError(
                f"every run failed in cell (width={w}, lambda={lam}, reg={reg.label}): "
                + "; ".join(failures)
            )
        metric_names = _BASE_METRICS + [
            n for thr in config.thr_values for n in _constrained_names(thr)
        ]
        metrics = {
            name: aggregate([r.metrics[name] for r in records]) for name in metric_names
        }
        summaries.append(
            CellSummary(
                width=w,
                lambda_=lam,
                regularizer=reg.label,
                metrics=metrics,
                n_runs=len(records),
                failures=tuple(failures),
            )
        )
    return summaries


RESULTS_CSV_COLUMNS = ["width", "lambda", "regularizer", "metric", "mean", "ci95", "n_runs"]


def write_results_csv(summaries: list[CellSummary], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULTS_CSV_COLUMNS)
        for cell in summaries:
            for metric, (mean, ci) in cell.metrics.items():
                writer.writerow(
                    [
                        cell.width,
                        repr(float(cell.lambda_)),
                        cell.regularizer,
                        metric,
                        repr(mean),
                        repr(ci),
                        cell.n_runs,
                    ]
                )


# ---------------------------------------------------------------------------
# JSON config round trip


def _train_to_json(cfg: TrainConfig) -> dict:
    doc = {
        "total_steps": cfg.total_steps,
        "batch_size": cfg.batch_size,
        "mindiff_batch_size": cfg.mindiff_batch_size,
        "lr_initial": cfg.lr_initial,
        "lr_decay_factor": cfg.lr_decay_factor,
        "lr_decay_every": cfg.lr_decay_every,
        "eval_every": cfg.eval_every,
        "kernel": {"family": cfg.kernel.family, "bandwidth": cfg.kernel.bandwidth},
    }
    if cfg.weight_decay:
        doc["weight_decay"] = cfg.weight_decay
    if cfg.flood_level is not None:
        doc["flood_level"] = cfg.flood_level
    if cfg.early_stopping is not None:
        doc["early_stopping"] = {
            "criterion": cfg.early_stopping.criterion,
            "patience": cfg.early_stopping.patience,
        }
    return doc


def _train_from_json(doc: dict) -> TrainConfig:
    doc = dict(doc)
    kernel_doc = doc.pop("kernel", None)
    kernel = (
        KernelSpec(kernel_doc["family"], float(kernel_doc["bandwidth"]))
        if kernel_doc
        else KernelSpec()
    )
    es_doc = doc.pop("early_stopping", None)
    es = EarlyStoppingSpec(**es_doc) if es_doc else None
    return TrainConfig(kernel=kernel, early_stopping=es, **doc)


def config_to_json(config: SweepConfig) -> dict:
    doc = {
        "widths": list(config.widths),
        "lambdas": list(config.lambdas),
        "regularizers": [
            {"kind": r.kind} | ({} if r.value is None else {"value": r.value})
            for r in config.regularizers
        ],
        "seeds": list(config.seeds),
        "thr_values": list(config.thr_values),
        "train": _train_to_json(config.train),
        "split": {
            "train_fraction": config.split_spec.train_fraction,
            "val_fraction": config.split_spec.val_fraction,
            "test_fraction": config.split_spec.test_fraction,
            "seed": config.split_spec.seed,
            "stratified": config.split_spec.stratified,
        },
    }
    if config.data is not None:
        doc["data"] = {
            "n_total": config.data.n_total,
            "d_core": config.data.d_core,
            "d_spur": config.data.d_spur,
            "d_noise": config.data.d_noise,
            "core_mean": config.data.core_mean,
            "spur_mean": config.data.spur_mean,
            "noise_sigma": config.data.noise_sigma,
            "majority_fraction": config.data.majority_fraction,
            "positive_fraction": config.data.positive_fraction,
            "seed": config.data.seed,
            "stratified": config.data.stratified,
        }
    if config.data_csv is not None:
        doc["data_csv"] = config.data_csv
    return doc


def config_from_json(doc: dict) -> SweepConfig:
    try:
        train = _train_from_json(doc.get("train", {}))
        regs = []
        for r in doc.get("regularizers", [{"kind": "none"}]):
            if isinstance(r, str):
                regs.append(Regularizer(kind=r))
            else:
                regs.append(Regularizer(kind=r["kind"], value=r.get("value")))
        data = None
        if "data" in doc:
            data = SpuriousSpec(**doc["data"])
        split_spec = SplitSpec(**doc["split"]) if "split" in doc else None
        return SweepConfig(
            widths=tuple(int(w) for w in doc["widths"]),
            lambdas=tuple(float(l) for l in doc["lambdas"]),
            regularizers=tuple(regs),
            seeds=tuple(int(s) for s in doc["seeds"]),
            train=train,
            thr_values=tuple(float(t) for t in doc.get("thr_values", [0.1])),
            data=data,
            split_spec=split_spec,
            data_csv=doc.get("data_csv"),
        )
    except (KeyError, TypeError) as exc:
        raise SpecError(f"invalid sweep config: {exc}") from None


def load_config(path) -> SweepConfig:
    with open(path, encoding="utf-8") as fh:
        return config_from_json(json.load(fh))


# ---------------------------------------------------------------------------
# Presets: the desk-scale standard fixture and the named experiment grids.

# Synthetic stand-in for a feature-extracted spurious-correlation dataset:
# 4,000 rows, 64 features (8 label-aligned, 8 attribute-aligned, 48 noise),
# 95/5 majority/minority alignment, 25% positive rate.
STANDARD_FIXTURE = SpuriousSpec(
    n_total=4000,
    d_core=8,
    d_spur=8,
    d_noise=48,
    core_mean=0.5,
    spur_mean=1.0,
    noise_sigma=1.0,
    majority_fraction=0.95,
    positive_fraction=0.25,
    seed=20240801,
)

STANDARD_SPLIT = SplitSpec(0.5, 0.25, 0.25, seed=71, stratified=True)

# Desk-scale schedule: one lr decade per 2,000 steps, 24 trace points.
DESK_TRAIN = TrainConfig(
    total_steps=6000,
    batch_size=128,
    mindiff_batch_size=16,
    lr_initial=0.01,
    lr_decay_factor=10.0,
    lr_decay_every=2000,
    eval_every=250,
)

DEFAULT_SEEDS = tuple(range(10))
DEFAULT_LAMBDAS = (0.0, 0.5, 1.0, 1.5)

# Two decades of widths straddling the fixture's interpolation threshold
# (~256 under the desk schedule).
DOUBLE_DESCENT_WIDTHS = (24, 48, 96, 160, 256, 384, 512, 768, 1536, 2560)

PRESET_NAMES = (
    "double_descent",
    "mindiff_vs_width",
    "dynamics_trace",
    "constrained_error",
    "batch_sizing",
    "regularizer_compare",
)


def preset(name: str) -> SweepConfig:
    """Named experiment grid on the standard fixture, scaled to desk size."""
    none = (Regularizer("none"),)
    base = dict(
        seeds=DEFAULT_SEEDS,
        train=DESK_TRAIN,
        thr_values=(0.1,),
        data=STANDARD_FIXTURE,
        split_spec=STANDARD_SPLIT,
    )
    if name == "double_descent":
        return SweepConfig(
            widths=DOUBLE_DESCENT_WIDTHS, lambdas=(0.0,), regularizers=none, **base
        )
    if name == "mindiff_vs_width":
        return SweepConfig(
            widths=(48, 128, 256, 512, 1024),
            lambdas=DEFAULT_LAMBDAS,
            regularizers=none,
            **base,
        )
    if name == "dynamics_trace":
        return SweepConfig(
            widths=(128, 1024),
            lambdas=(1.5,),
            regularizers=none,
            **(base | {"seeds": (0, 1, 2)}),
        )
    if name == "constrained_error":
        return SweepConfig(
            widths=(48, 128, 256, 512, 1024),
            lambdas=(0.0, 1.5),
            regularizers=none,
            **(base | {"thr_values": (0.02, 0.05, 0.1, 0.2)}),
        )
    if name == "batch_sizing":
        return SweepConfig(
            widths=(128, 256, 512),
            lambdas=(1.5,),
            regularizers=(
                Regularizer("batch_size", 8),
                Regularizer("batch_size", 32),
                Regularizer("none"),
            ),
            **base,
        )
    if name == "regularizer_compare":
        return SweepConfig(
            widths=(128, 1024),
            lambdas=(1.5,),
            regularizers=(
                Regularizer("none"),
                Regularizer("weight_decay", 0.001),
                Regularizer("weight_decay", 0.1),
                Regularizer("weight_decay", 10.0),
                Regularizer("early_stopping", "primary"),
                Regularizer("early_stopping", "total"),
                Regularizer("flooding", 0.05),
                Regularizer("flooding", 0.1),
            ),
            **base,
        )
    raise SpecError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")
