"""Minibatch Adam training loop with MinDiff subgroup sampling and traces.

One call to :func:`train` runs a fixed number of Adam updates on the model
head.  Hidden features are precomputed once per dataset (the projection is
frozen, so ReLU(U x) never changes), which keeps a step at width m to a few
O(batch x m) operations.

Every ``eval_every`` steps the loop records losses, error rates, and FNR
gaps on the full training set (the fixed probe) and the validation set, plus
the probe-set gradient norm of the MinDiff penalty -- the quantity that
collapses once an over-parameterized model drives its training loss to zero.

Early stopping tracks a validation criterion (primary or total loss) and
returns the best checkpoint seen, whether or not the patience budget
actually triggered a stop.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .datagen import GroupedDataset
from .errors import MissingSubgroupError, NonFiniteLossError, SpecError
from .losses import (
    DEFAULT_KERNEL,
    KernelSpec,
    _bce_from_logits,
    _mmd_squared_with_grad,
    flood_transform,
    total_loss_and_gradient_hidden,
)
from .metrics import evaluate
from .model import RandomFeatureModel, sigmoid, sigmoid_prime

__all__ = [
    "TrainConfig",
    "EarlyStoppingSpec",
    "AdamState",
    "TrainTrace",
    "TrainedModel",
    "TRACE_CSV_COLUMNS",
    "adam_step",
    "lr_at",
    "sample_batches",
    "train",
]

STOPPING_CRITERIA = ("primary_val_loss", "total_val_loss")


@dataclass(frozen=True)
class EarlyStoppingSpec:
    """Stop when the criterion fails to improve for `patience` evaluations."""

    criterion: str = "primary_val_loss"
    patience: int = 10

    def validate(self) -> None:
        if self.criterion not in STOPPING_CRITERIA:
            raise SpecError(f"unknown early-stopping criterion {self.criterion!r}")
        if self.patience < 1:
            raise SpecError("early-stopping patience must be >= 1")


@dataclass(frozen=True)
class TrainConfig:
    """All training hyper-parameters.

    Defaults follow the baseline recipe: Adam, 30,000 steps, batch 128,
    initial learning rate 0.01 divided by 10 every 10,000 steps.  MinDiff
    batches draw ``mindiff_batch_size`` rows per positive subgroup, with
    replacement, so tiny minorities still fill a batch.
    """

    total_steps: int = 30_000
    batch_size: int = 128
    mindiff_batch_size: int = 16
    lambda_: float = 0.0
    lr_initial: float = 0.01
    lr_decay_factor: float = 10.0
    lr_decay_every: int = 10_000
    weight_decay: float = 0.0
    flood_level: float | None = None
    early_stopping: EarlyStoppingSpec | None = None
    eval_every: int = 250
    kernel: KernelSpec = field(default_factory=lambda: DEFAULT_KERNEL)
    seed: int = 0

    def validate(self) -> None:
        if self.total_steps < 1:
            raise SpecError("total_steps must be >= 1")
        if self.batch_size < 1 or self.mindiff_batch_size < 1:
            raise SpecError("batch sizes must be >= 1")
        if self.lambda_ < 0:
            raise SpecError("lambda must be >= 0")
        if not self.lr_initial > 0:
            raise SpecError("lr_initial must be > 0")
        if not self.lr_decay_factor > 1:
            raise SpecError("lr_decay_factor must be > 1")
        if self.lr_decay_every < 1:
            raise SpecError("lr_decay_every must be >= 1")
        if self.weight_decay < 0:
            raise SpecError("weight_decay must be >= 0")
        if self.flood_level is not None and self.flood_level < 0:
            raise SpecError("flood_level must be >= 0")
        if not 1 <= self.eval_every <= self.total_steps:
            raise SpecError("eval_every must satisfy 1 <= eval_every <= total_steps")
        if self.early_stopping is not None:
            self.early_stopping.validate()
        self.kernel.validate()


@dataclass
class AdamState:
    """Bias-corrected Adam moments over a flat parameter vector."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def initial(cls, n_params: int) -> "AdamState":
        return cls(np.zeros(n_params), np.zeros(n_params))


def adam_step(
    params: np.ndarray, grads: np.ndarray, state: AdamState, lr: float
) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; returns new parameters and state."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.first_moment.shape:
        raise SpecError("params, grads, and Adam moments must have matching shapes")
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * grads**2
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return new_params, replace(state, first_moment=m, second_moment=v, step_count=t)


def lr_at(step: int, config: TrainConfig) -> float:
    """Step-decay schedule: lr_initial / decay_factor ** (step // decay_every)."""
    if step < 0 or step >= config.total_steps:
        raise SpecError("step must satisfy 0 <= step < total_steps")
    return config.lr_initial / config.lr_decay_factor ** (step // config.lr_decay_every)


def _sample_indices(
    data: GroupedDataset, config: TrainConfig, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Primary batch indices (uniform) and MinDiff subgroup indices."""
    n = data.n
    primary = rng.choice(n, size=config.batch_size, replace=config.batch_size > n)
    if config.lambda_ == 0:
        return primary, np.empty(0, dtype=np.int64)
    k = config.mindiff_batch_size
    groups = []
    for g in (0, 1):
        pool = data.group_indices(1, g)
        if pool.size == 0:
            raise MissingSubgroupError(
                f"cannot sample MinDiff batch: no (y=1, a={g}) rows in training data"
            )
        groups.append(pool[rng.integers(0, pool.size, size=k)])
    return primary, np.concatenate(groups)


def sample_batches(
    data: GroupedDataset, config: TrainConfig, rng: np.random.Generator
) -> tuple[GroupedDataset, GroupedDataset]:
    """Draw one (primary, mindiff) batch pair.

    The primary batch has ``batch_size`` rows drawn uniformly without
    replacement (with replacement only when batch_size exceeds the dataset).
    The MinDiff batch holds ``mindiff_batch_size`` rows from each positive
    subgroup, drawn with replacement; it is empty (and the RNG untouched by
    it) when lambda is 0.
    """
    p_idx, m_idx = _sample_indices(data, config, rng)
    return data.subset(p_idx), data.subset(m_idx)


TRACE_CSV_COLUMNS = [
    "step",
    "lr",
    "train_lp",
    "train_lm",
    "train_lt",
    "train_err",
    "train_fnr_gap",
    "val_lp",
    "val_lt",
    "val_err",
    "val_fnr_gap",
]


@dataclass
class TrainTrace:
    """Per-evaluation-point training record (arrays indexed in step order).

    ``mindiff_grad_norm`` is a diagnostic kept in memory only: the norm of
    the MinDiff penalty's head gradient on the training probe set.  It is
    not part of the exported CSV schema.
    """

    step: np.ndarray
    lr: np.ndarray
    train_lp: np.ndarray
    train_lm: np.ndarray
    train_lt: np.ndarray
    train_err: np.ndarray
    train_fnr_gap: np.ndarray
    val_lp: np.ndarray
    val_lt: np.ndarray
    val_err: np.ndarray
    val_fnr_gap: np.ndarray
    mindiff_grad_norm: np.ndarray

    def __len__(self) -> int:
        return len(self.step)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(TRACE_CSV_COLUMNS)
            for i in range(len(self)):
                writer.writerow(
                    [int(self.step[i])]
                    + [repr(float(getattr(self, c)[i])) for c in TRACE_CSV_COLUMNS[1:]]
                )


@dataclass
class TrainedModel:
    model: RandomFeatureModel
    trace: TrainTrace
    config: TrainConfig
    stopped_early_at: int | None = None


def _fnr_gap_and_error(p: np.ndarray, data: GroupedDataset) -> tuple[float, float]:
    report = evaluate((p >= 0.5).astype(np.int64), data.labels, data.attrs)
    return report.error, report.fnr_gap


def train(
    model: RandomFeatureModel,
    train_data: GroupedDataset,
    val_data: GroupedDataset,
    config: TrainConfig,
) -> TrainedModel:
    """Run the full training loop; the input model is left untouched.

    Deterministic given (model, config.seed).  Raises
    :class:`NonFiniteLossError` with the step index if the loss diverges.
    """
    config.validate()
    for name, ds in (("train", train_data), ("validation", val_data)):
        if ds.d != model.input_dim:
            raise SpecError(f"{name} data dimension {ds.d} != model input dim {model.input_dim}")
        if not ds.has_positive_subgroups():
            raise MissingSubgroupError(
                f"{name} data must contain both positive subgroups (needed for FNR gaps)"
            )

    rng = np.random.default_rng(config.seed)
    h_train = model.hidden(train_data.features)
    h_val = model.hidden(val_data.features)
    y_train = train_data.labels.astype(np.float64)
    y_val = val_data.labels.astype(np.float64)
    pos0 = train_data.group_indices(1, 0)
    pos1 = train_data.group_indices(1, 1)
    pos_all = np.concatenate([pos0, pos1])
    vpos0 = val_data.group_indices(1, 0)
    vpos1 = val_data.group_indices(1, 1)

    w = model.head_weights.copy()
    b = float(model.head_bias)
    state = AdamState.initial(model.width + 1)

    rows: list[list[float]] = []
    es = config.early_stopping
    best_crit = np.inf
    best_w, best_b = w.copy(), b
    stale = 0
    stopped_at: int | None = None

    def evaluate_point(step_done: int, lr: float) -> float:
        """Record one trace row; returns the early-stopping criterion value."""
        z_tr = h_train @ w + b
        p_tr = sigmoid(z_tr)
        lp_tr, _ = _bce_from_logits(z_tr, y_train)
        lm_tr, ds, dt = _mmd_squared_with_grad(p_tr[pos0], p_tr[pos1], config.kernel)
        lm_tr = max(lm_tr, 0.0)
        wd = 0.5 * config.weight_decay * (float(w @ w) + b * b)
        eff = lp_tr if config.flood_level is None else flood_transform(lp_tr, config.flood_level)
        lt_tr = eff + config.lambda_ * lm_tr + wd
        err_tr, gap_tr = _fnr_gap_and_error(p_tr, train_data)

        dp = np.concatenate([ds, dt]) * sigmoid_prime(z_tr[pos_all])
        g_norm = float(np.sqrt(np.sum((h_train[pos_all].T @ dp) ** 2) + dp.sum() ** 2))

        z_v = h_val @ w + b
        p_v = sigmoid(z_v)
        lp_v, _ = _bce_from_logits(z_v, y_val)
        lm_v = max(_mmd_squared_with_grad(p_v[vpos0], p_v[vpos1], config.kernel)[0], 0.0)
        lt_v = lp_v + config.lambda_ * lm_v
        err_v, gap_v = _fnr_gap_and_error(p_v, val_data)

        rows.append(
            [step_done, lr, lp_tr, lm_tr, lt_tr, err_tr, gap_tr, lp_v, lt_v, err_v, gap_v, g_norm]
        )
        return lp_v if es is None or es.criterion == "primary_val_loss" else lt_v

    for step in range(config.total_steps):
        lr = lr_at(step, config)
        p_idx, m_idx = _sample_indices(train_data, config, rng)
        breakdown, grad_w, grad_b = total_loss_and_gradient_hidden(
            w,
            b,
            h_train[p_idx],
            y_train[p_idx],
            h_train[m_idx] if m_idx.size else None,
            train_data.labels[m_idx] if m_idx.size else None,
            train_data.attrs[m_idx] if m_idx.size else None,
            lambda_=config.lambda_,
            kernel=config.kernel,
            flood_level=config.flood_level,
            weight_decay=config.weight_decay,
        )
        if not np.isfinite(breakdown.total):
            raise NonFiniteLossError(step, breakdown.total)
        theta, state = adam_step(
            np.concatenate([w, [b]]), np.concatenate([grad_w, [grad_b]]), state, lr
        )
        w, b = theta[:-1], float(theta[-1])

        done = step + 1
        if done % config.eval_every == 0 or done == config.total_steps:
            crit = evaluate_point(done, lr)
            if es is not None:
                if crit < best_crit:
                    best_crit = crit
                    best_w, best_b = w.copy(), b
                    stale = 0
                else:
                    stale += 1
                    if stale >= es.patience:
                        stopped_at = done
                        break

    if es is not None:
        w, b = best_w, best_b

    data = np.asarray(rows, dtype=np.float64)
    trace = TrainTrace(
        step=data[:, 0].astype(np.int64),
        lr=data[:, 1],
        train_lp=data[:, 2],
        train_lm=data[:, 3],
        train_lt=data[:, 4],
        train_err=data[:, 5],
        train_fnr_gap=data[:, 6],
        val_lp=data[:, 7],
        val_lt=data[:, 8],
        val_err=data[:, 9],
        val_fnr_gap=data[:, 10],
        mindiff_grad_norm=data[:, 11],
    )
    trained = replace(model, head_weights=w, head_bias=b)
    return TrainedModel(model=trained, trace=trace, config=config, stopped_early_at=stopped_at)
