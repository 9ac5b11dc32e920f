"""Hard thresholding of residuals, the robust objective and its gradient.

An entry is removed when it is simultaneously among the ``ceil(gamma * n)``
largest entries (by absolute value) of its row *and* of its column. Ranking is
deterministic: on equal magnitudes the smaller index ranks higher.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import InputError, ParameterError


@dataclass(frozen=True)
class ObservationMask:
    """Observed index set of an ``rows x cols`` matrix plus the sampling rate."""

    observed: np.ndarray
    rate_p: float = 1.0

    def __post_init__(self):
        obs = np.asarray(self.observed, dtype=bool)
        if obs.ndim != 2 or min(obs.shape) < 1:
            raise InputError(f"mask must be a non-empty 2-D array, got shape {obs.shape}")
        if not obs.any():
            raise InputError("mask observes no entries")
        if not 0.0 < self.rate_p <= 1.0:
            raise ParameterError(f"rate_p must lie in (0, 1], got {self.rate_p}")
        object.__setattr__(self, "observed", obs)

    @classmethod
    def from_indices(cls, rows, cols, indices, rate_p=None):
        obs = np.zeros((rows, cols), dtype=bool)
        idx = np.asarray(indices, dtype=np.int64).reshape(-1, 2)
        if idx.size and (idx.min() < 0 or idx[:, 0].max() >= rows or idx[:, 1].max() >= cols):
            raise InputError("mask index out of range")
        obs[idx[:, 0], idx[:, 1]] = True
        if obs.sum() != len(idx):
            raise InputError("duplicate indices in mask")
        if rate_p is None:
            rate_p = obs.mean()
        return cls(obs, float(rate_p))

    @classmethod
    def full(cls, rows, cols):
        return cls(np.ones((rows, cols), dtype=bool), 1.0)

    @property
    def shape(self):
        return self.observed.shape

    @property
    def count(self):
        return int(self.observed.sum())

    def indices(self):
        """Observed (row, col) pairs in row-major order, shape (count, 2)."""
        return np.argwhere(self.observed)


@dataclass(frozen=True)
class ThresholdedResidual:
    """Output of F (or its partial variant) together with what it removed."""

    values: np.ndarray
    zeroed: np.ndarray
    gamma: float

    @property
    def pattern(self):
        """Zeroed (row, col) index pairs as a set of 0-based tuples."""
        return {(int(i), int(j)) for i, j in np.argwhere(self.zeroed)}

    @property
    def shape(self):
        return self.values.shape


def cap(gamma, n):
    """Number of entries removable from a line of ``n`` (observed) entries.

    ``ceil(gamma * n)`` with products within 1e-9 of an integer snapped to it,
    so that e.g. gamma = 1/3, n = 3 gives 1 and gamma = 0.2, n = 240 gives 48.
    """
    g = np.asarray(gamma * np.asarray(n, dtype=float))
    near = np.rint(g)
    return np.where(np.abs(g - near) <= 1e-9, near, np.ceil(g)).astype(np.intp)


def _check(A, gamma, observed=None):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or min(A.shape) < 1:
        raise InputError(f"expected a non-empty matrix, got shape {A.shape}")
    if not (0.0 <= gamma <= 1.0) or math.isnan(gamma):
        raise ParameterError(f"gamma must lie in [0, 1], got {gamma}")
    finite = np.isfinite(A) if observed is None else np.isfinite(A) | ~observed
    if not np.all(finite):
        raise InputError("matrix contains non-finite entries")
    return A


def _zeroed_pattern(absval, observed, gamma, backend=None):
    kernel = _backend.get_kernel(backend)
    obs8 = np.ascontiguousarray(observed).view(np.uint8)
    k_row = cap(gamma, observed.sum(axis=1))
    k_col = cap(gamma, observed.sum(axis=0))
    in_row = np.zeros(absval.shape, dtype=np.uint8)
    in_col = np.zeros(absval.shape, dtype=np.uint8)
    kernel(absval, obs8, k_row, in_row)
    kernel(absval.T, obs8.T, k_col, in_col.T)
    return (in_row & in_col).astype(bool)


def hard_threshold(A, gamma, *, backend=None):
    """Zero the entries that are top-``ceil(gamma*n)`` in both row and column.

    >>> A = np.array([[9., 1, 2], [1, 8, 3], [2, 3, 0]])
    >>> hard_threshold(A, 1 / 3).values
    array([[0., 1., 2.],
           [1., 0., 3.],
           [2., 3., 0.]])
    """
    A = _check(A, gamma)
    observed = np.ones(A.shape, dtype=bool)
    zeroed = _zeroed_pattern(np.abs(A), observed, gamma, backend)
    values = np.where(zeroed, 0.0, A)
    return ThresholdedResidual(values, zeroed, float(gamma))


def hard_threshold_partial(A, gamma, mask, *, backend=None):
    """Thresholding restricted to the observed entries of ``mask``.

    Ranks and caps are computed over observed entries only. Unobserved entries
    come out as 0 and are not counted as zeroed.
    """
    if mask is None:
        return hard_threshold(A, gamma, backend=backend)
    A = np.asarray(A, dtype=float)
    if mask.shape != A.shape:
        raise InputError(f"mask shape {mask.shape} does not match matrix shape {A.shape}")
    observed = mask.observed
    A = _check(A, gamma, observed)
    # unobserved entries of A may hold anything, including garbage
    with np.errstate(invalid="ignore"):
        absval = np.where(observed, np.abs(A), 0.0)
    zeroed = _zeroed_pattern(absval, observed, gamma, backend)
    values = np.where(observed & ~zeroed, A, 0.0)
    return ThresholdedResidual(values, zeroed, float(gamma))


def threshold(A, gamma, mask=None, *, backend=None):
    if mask is None:
        return hard_threshold(A, gamma, backend=backend)
    return hard_threshold_partial(A, gamma, mask, backend=backend)


def _residual(L, Y):
    L = L.dense() if hasattr(L, "dense") else np.asarray(L, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if L.shape != Y.shape:
        raise InputError(f"shape mismatch: L {L.shape} vs Y {Y.shape}")
    return L - Y


def objective(L, Y, gamma, mask=None):
    """Half the squared Frobenius norm of the thresholded residual ``F(L - Y)``."""
    D = threshold(_residual(L, Y), gamma, mask).values
    return 0.5 * float(np.vdot(D, D))


def euclidean_gradient(L, Y, gamma, mask=None):
    """Gradient of :func:`objective`, which is the thresholded residual itself."""
    return threshold(_residual(L, Y), gamma, mask)
