"""fairlab: a laboratory for fairness-penalized training of random-feature
classifiers, with regularizers, per-group threshold correction, and a
seeded sweep harness."""

from .datagen import (
    GroupedDataset,
    SplitSpec,
    SpuriousSpec,
    generate_spurious,
    load_csv,
    save_csv,
    split,
)
from .errors import (
    CsvFormatError,
    FairlabError,
    InfeasibleConstraintError,
    InterpolationNotFoundError,
    MissingSubgroupError,
    NonFiniteLossError,
    SpecError,
)
from .losses import (
    DEFAULT_KERNEL,
    KernelSpec,
    LossBreakdown,
    bce_loss,
    flood_transform,
    mindiff_loss,
    mmd_squared,
    total_loss_and_gradient,
    weight_decay_penalty,
)
from .metrics import EvalReport, evaluate, interpolation_threshold
from .model import (
    ModelOutputs,
    RandomFeatureModel,
    forward,
    head_gradient,
    init_model,
    load_checkpoint,
    predict,
    save_checkpoint,
)
from .sweep import (
    CellSummary,
    Regularizer,
    RunRecord,
    SweepConfig,
    aggregate,
    execute_run,
    preset,
    run_sweep,
    write_results_csv,
)
from .threshold import (
    ConstrainedResult,
    ThresholdPair,
    constrained_test_error,
    pareto_front,
    threshold_correct,
    write_pareto_csv,
)
from .trainer import (
    AdamState,
    EarlyStoppingSpec,
    TrainConfig,
    TrainedModel,
    TrainTrace,
    adam_step,
    lr_at,
    sample_batches,
    train,
)

__version__ = "0.1.0"
