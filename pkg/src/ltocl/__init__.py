"""Dual-stage training for long-tailed online continual learning.

The pieces compose bottom-up: seeded long-tailed task streams, a reservoir
replay buffer with multi-exemplar pairing, a two-headed MLP trained in an
interleaved dual stage (contrastive representation updates, then
prior-equalized classifier updates on frozen embeddings), and class-incremental
evaluation with head/tail breakdowns. `run_experiment` ties one run together;
the `ltocl` command drives multi-seed experiments and the ablation sweeps.
"""

from .buffer import CombinedBatch, ReplayBuffer, compose_combined_batch
from .errors import (
    ConfigError,
    DataError,
    DegenerateBatchError,
    DimensionError,
    FormatError,
    LabelError,
    LtoclError,
    SinglePassError,
)
from .losses import (
    ClassPrior,
    LossResult,
    cross_entropy_loss,
    equalization_loss,
    supcon_loss,
)
from .metrics import (
    accuracy,
    average_accuracy,
    confusion_matrix,
    evaluate,
    forgetting,
    group_accuracy,
    group_thirds,
    headtail_breakdown,
    per_class_accuracy,
    predict,
)
from .model import (
    DualHeadNet,
    ModelConfig,
    STAGE_ONE,
    STAGE_TWO,
    load_checkpoint,
    save_checkpoint,
)
from .numeric import ParamTensor, SgdConfig, finite_difference_gradient, sgd_step
from .stream import (
    ArraySource,
    AugmentConfig,
    Batch,
    StreamConfig,
    SyntheticSource,
    TaskStream,
    augment,
    build_stream,
    load_csv_dataset,
    load_idx_dataset,
    long_tail_counts,
    make_balanced_test_split,
)
from .trainer import (
    METHOD_DELTA,
    METHOD_ER_CE,
    RunResult,
    RunState,
    Seeds,
    StepLog,
    TrainConfig,
    delta_step,
    derive_seeds,
    er_ce_step,
    make_run_state,
    run_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "ArraySource",
    "AugmentConfig",
    "Batch",
    "ClassPrior",
    "CombinedBatch",
    "ConfigError",
    "DataError",
    "DegenerateBatchError",
    "DimensionError",
    "DualHeadNet",
    "FormatError",
    "LabelError",
    "LossResult",
    "LtoclError",
    "METHOD_DELTA",
    "METHOD_ER_CE",
    "ModelConfig",
    "ParamTensor",
    "ReplayBuffer",
    "RunResult",
    "RunState",
    "Seeds",
    "SgdConfig",
    "SinglePassError",
    "STAGE_ONE",
    "STAGE_TWO",
    "StepLog",
    "StreamConfig",
    "SyntheticSource",
    "TaskStream",
    "TrainConfig",
    "accuracy",
    "augment",
    "average_accuracy",
    "build_stream",
    "compose_combined_batch",
    "confusion_matrix",
    "cross_entropy_loss",
    "delta_step",
    "derive_seeds",
    "equalization_loss",
    "er_ce_step",
    "evaluate",
    "finite_difference_gradient",
    "forgetting",
    "group_accuracy",
    "group_thirds",
    "headtail_breakdown",
    "load_checkpoint",
    "load_csv_dataset",
    "load_idx_dataset",
    "long_tail_counts",
    "make_balanced_test_split",
    "make_run_state",
    "per_class_accuracy",
    "predict",
    "run_experiment",
    "save_checkpoint",
    "sgd_step",
    "supcon_loss",
]
