"""modelfuse: fusion toolkit for multi-label prediction matrices.

Evaluate per-label/macro AUROC exactly, fuse models by unweighted or
simplex-weighted averaging (weights found with differential evolution) or by
probability stacking, analyze learning-rate range tests, and build
patient-grouped splits without leakage.
"""

__version__ = "0.1.0"

from .dataset import (
    CHESTXRAY14_LABELS,
    GroundTruth,
    LabelSpace,
    ModelBundle,
    PredictionMatrix,
    align,
    load_predictions,
    load_truth,
    write_predictions,
    write_truth,
)
from .de import DeConfig, DeResult, optimize, project_to_simplex
from .ensemble import (
    MetaModel,
    MetaTrainConfig,
    StackedFeatures,
    WeightVector,
    optimize_weights,
    predict_meta,
    stack_features,
    train_meta,
    unweighted_average,
    weighted_average,
)
from .errors import ComputationError, InputError, ModelFuseError, UndefinedAurocError
from .lr_tools import ClrSchedule, LrLog, LrRangeResult, clr_at, generate_sweep, suggest_max_lr
from .metrics import AurocReport, RocCurve, auroc, macro_auroc, roc_curve
from .splitter import SplitAssignment, SplitConfig, grouped_split
from .synthgen import SynthConfig, expected_auroc, generate
