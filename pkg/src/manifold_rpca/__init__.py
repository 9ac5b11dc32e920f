"""Robust PCA by gradient descent on the manifold of fixed-rank matrices."""

from ._backend import BACKEND
from .baseline import FactorPair, bm_solve, bm_step
from .errors import (
    DegenerateRankError,
    DivergenceError,
    FormatError,
    InputError,
    ParameterError,
    RetractionSingularError,
    RPCAError,
)
from .manifold import (
    FactoredLowRank,
    TangentVector,
    project_tangent,
    retract_orthographic,
    retract_projective,
    truncated_svd,
)
from .solver import IterationTrace, SolverConfig, initialize, solve, sparse_estimate, step
from .thresholding import (
    ObservationMask,
    ThresholdedResidual,
    euclidean_gradient,
    hard_threshold,
    hard_threshold_partial,
    objective,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "DegenerateRankError",
    "DivergenceError",
    "FactorPair",
    "FactoredLowRank",
    "FormatError",
    "InputError",
    "IterationTrace",
    "ObservationMask",
    "ParameterError",
    "RPCAError",
    "RetractionSingularError",
    "SolverConfig",
    "TangentVector",
    "ThresholdedResidual",
    "bm_solve",
    "bm_step",
    "euclidean_gradient",
    "hard_threshold",
    "hard_threshold_partial",
    "initialize",
    "objective",
    "project_tangent",
    "retract_orthographic",
    "retract_projective",
    "solve",
    "sparse_estimate",
    "step",
    "truncated_svd",
]
