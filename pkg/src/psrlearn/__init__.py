"""Discrete predictive state representations: two-stage regression,
Inference Gradient refinement and evaluation metrics."""
from .errors import (
    DegenerateMomentsError,
    DivergenceError,
    EmptyDataError,
    InvalidArgumentError,
    ModelParseError,
    PsrError,
    ResourceLimitError,
    UnsupportedVersionError,
    WindowError,
    ZeroProbabilityHistoryError,
)
from .features import FeatureSpec, future_features, history_features, make_training_triples
from .hmm import HmmModel, generate_ring_hmm, sample_sequences, sequence_log_prob
from .metrics import MetricsReport, evaluate, l2se_stats, mean_pnll, ospa
from .psr import PsrModel, deserialize, filter, filter_sequence, pnll, serialize
from .refine import (
    RefineConfig,
    multi_step_gradient,
    one_step_gradient,
    psim_baseline,
    refine_multi_step,
    refine_one_step,
)
from .two_stage import accumulate, exact_moments, two_stage_regression

__version__ = "0.1.0"
