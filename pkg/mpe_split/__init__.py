"""Operator splitting and multi-product expansion integrators."""

__version__ = "0.1.0"

from mpe_split.core import (  # noqa: E402
    DimensionError,
    EvaluationError,
    FlowError,
    SplitSystem,
    SubFlow,
    VectorField,
    advance,
    error_norms,
    reference_flow,
)
from mpe_split.mpe import KSequence, MpeScheme, mpe_scheme, mpe_step, mpe_weights  # noqa: E402
from mpe_split.splitting import (  # noqa: E402
    IterativeConfig,
    ab_step,
    burstein_mirin_step,
    dunn_step,
    iterative_split_alternating,
    iterative_split_one,
    strang_step,
    symmetric_sum_step,
)

__all__ = [
    "DimensionError",
    "EvaluationError",
    "FlowError",
    "IterativeConfig",
    "KSequence",
    "MpeScheme",
    "SplitSystem",
    "SubFlow",
    "VectorField",
    "ab_step",
    "advance",
    "burstein_mirin_step",
    "dunn_step",
    "error_norms",
    "iterative_split_alternating",
    "iterative_split_one",
    "mpe_scheme",
    "mpe_step",
    "mpe_weights",
    "reference_flow",
    "strang_step",
    "symmetric_sum_step",
]
