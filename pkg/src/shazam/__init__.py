"""Online fusion of frozen pathology teacher encoders into a small student.

Feature containers carry multi-scale vectors from N frozen teachers; the
student projects them to a shared width, mixes teachers per scale with a
softmax gate, refines the mix with a self-attention stack, and feeds the
concatenated per-scale embeddings to a task head — trained end to end with
the task loss plus a cosine+Huber feature-distillation penalty.
"""

from .distill import DistillConfig, LossBreakdown, distill_pair, distill_total, total_loss
from .errors import (
    CorruptContainerError,
    DegenerateSplitError,
    DegenerateVectorError,
    EmptyCohortError,
    InconsistentContainerError,
    InvalidArgumentError,
    NumericError,
    ShazamError,
    UndefinedCIndexError,
    UndefinedCorrelationError,
    UndefinedTestError,
    UnsupportedFormatError,
)
from .features import (
    SCALE_ORDER,
    FeatureSet,
    Fold,
    Manifest,
    MultiScaleFeature,
    SampleRecord,
    ScaleLevel,
    SlideBag,
    SynthConfig,
    TeacherSpec,
    extraction_depths,
    patient_split,
    read_feature_set,
    slide_bags,
    synth_teacher_set,
    write_feature_set,
)
from .fusion import FusionConfig, FusionModel
from .model import StudentModel, StudentOutput
from .optim import AdamW, decoupled_weight_update
from .stats import (
    BenchmarkTable,
    MetricReport,
    RankSummary,
    bootstrap_ci,
    classification_metrics,
    concordance_index,
    km_curve,
    km_logrank,
    pcc,
    rank_aggregate,
    wilcoxon_signed_rank,
)
from .tasks import (
    TRAIN_PRESETS,
    ClassLabel,
    ExpressionLabel,
    HeadConfig,
    SurvivalLabel,
    TaskKind,
    TrainConfig,
    cosine_lr,
    filter_cohort,
    log_normalize_expression,
    nll_survival_loss,
    preset,
    ridge_loss,
    survival_bins,
)
from .train import EvalResult, TrainResult, evaluate, prepare_expression_cohort, train

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "ShazamError",
    "InvalidArgumentError",
    "NumericError",
    "UnsupportedFormatError",
    "CorruptContainerError",
    "InconsistentContainerError",
    "DegenerateVectorError",
    "EmptyCohortError",
    "UndefinedCorrelationError",
    "UndefinedCIndexError",
    "UndefinedTestError",
    "DegenerateSplitError",
    # features / containers
    "ScaleLevel",
    "SCALE_ORDER",
    "extraction_depths",
    "TeacherSpec",
    "MultiScaleFeature",
    "SampleRecord",
    "Manifest",
    "FeatureSet",
    "SlideBag",
    "slide_bags",
    "SynthConfig",
    "synth_teacher_set",
    "write_feature_set",
    "read_feature_set",
    "Fold",
    "patient_split",
    # model
    "FusionConfig",
    "FusionModel",
    "StudentModel",
    "StudentOutput",
    "AdamW",
    "decoupled_weight_update",
    # losses
    "DistillConfig",
    "LossBreakdown",
    "distill_pair",
    "distill_total",
    "total_loss",
    # tasks
    "TaskKind",
    "ClassLabel",
    "ExpressionLabel",
    "SurvivalLabel",
    "log_normalize_expression",
    "filter_cohort",
    "survival_bins",
    "nll_survival_loss",
    "ridge_loss",
    "cosine_lr",
    "HeadConfig",
    "TrainConfig",
    "TRAIN_PRESETS",
    "preset",
    # training / evaluation
    "train",
    "TrainResult",
    "evaluate",
    "EvalResult",
    "prepare_expression_cohort",
    # statistics
    "MetricReport",
    "pcc",
    "concordance_index",
    "classification_metrics",
    "bootstrap_ci",
    "wilcoxon_signed_rank",
    "km_curve",
    "km_logrank",
    "BenchmarkTable",
    "RankSummary",
    "rank_aggregate",
]
