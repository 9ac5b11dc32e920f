"""Gradient descent on the rank-r manifold for robust PCA.

One iteration thresholds the residual ``L - Y``, projects it onto the tangent
space at ``L`` and retracts ``L - eta * P(D)`` back onto the manifold, either
projectively (truncated SVD) or orthographically (closed-form oblique
projection that never needs an SVD of anything larger than 2r x 2r).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import DegenerateRankError, ParameterError, RetractionSingularError
from .manifold import FactoredLowRank, _oblique, project_tangent, retract_projective, truncated_svd
from .thresholding import ObservationMask, threshold

RETRACTIONS = ("projective", "orthographic")
STALL_WINDOW = 5
BLOWUP_FACTOR = 1e6


@dataclass
class SolverConfig:
    rank_r: int
    gamma: float
    eta: float
    retraction: str = "orthographic"
    max_iters: int = 300
    rel_tol: float = 1e-6
    scale_step_by_inv_p: bool = True
    seed: int = 0

    def __post_init__(self):
        if int(self.rank_r) != self.rank_r or self.rank_r < 1:
            raise ParameterError(f"rank_r must be a positive integer, got {self.rank_r}")
        if not 0.0 <= self.gamma < 1.0:
            raise ParameterError(f"gamma must lie in [0, 1), got {self.gamma}")
        if not self.eta > 0:
            raise ParameterError(f"eta must be positive, got {self.eta}")
        if self.retraction not in RETRACTIONS:
            raise ParameterError(f"retraction must be one of {RETRACTIONS}, got {self.retraction!r}")
        if self.max_iters < 0:
            raise ParameterError("max_iters must be non-negative")
        if not self.rel_tol > 0:
            raise ParameterError("rel_tol must be positive")
        self.rank_r = int(self.rank_r)

    def effective_eta(self, mask=None):
        if mask is not None and self.scale_step_by_inv_p:
            return self.eta / mask.rate_p
        return self.eta


class IterationRecord(NamedTuple):
    iter: int
    objective: float
    ref_error: Optional[float]
    elapsed_ms: float


@dataclass
class IterationTrace:
    """Per-iteration history of a run plus how it ended.

    ``status`` is one of ``converged``, ``maxiter``, ``diverged`` or
    ``failed`` (rank collapse / singular retraction).
    """

    records: list = field(default_factory=list)
    status: str = "running"
    message: str = ""
    best_iter: int = 0

    def append(self, it, objective, ref_error, elapsed_ms):
        if self.records and it <= self.records[-1].iter:
            raise ValueError("iteration indices must increase")
        self.records.append(IterationRecord(it, objective, ref_error, elapsed_ms))

    @property
    def converged(self):
        return self.status == "converged"

    @property
    def iterations(self):
        return self.records[-1].iter if self.records else 0

    def objectives(self):
        return np.array([r.objective for r in self.records])

    def errors(self):
        return np.array([np.nan if r.ref_error is None else r.ref_error for r in self.records])

    def objective_increases(self, rtol=1e-12):
        """Iterations at which the objective went up (patterns may shift)."""
        f = self.objectives()
        return [self.records[k].iter for k in range(1, len(f)) if f[k] > f[k - 1] * (1 + rtol)]

    def first_iter_below(self, rel_tol, ref_norm):
        for rec in self.records:
            if rec.ref_error is not None and rec.ref_error <= rel_tol * ref_norm:
                return rec.iter
        return None


def _check_inputs(Y, config, mask):
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise ParameterError(f"Y must be a matrix, got shape {Y.shape}")
    if config.rank_r > min(Y.shape):
        raise ParameterError(f"rank {config.rank_r} exceeds min dimension of {Y.shape}")
    if mask is not None and mask.shape != Y.shape:
        raise ParameterError(f"mask shape {mask.shape} does not match Y {Y.shape}")
    return Y


def initialize(Y, config, mask=None):
    """Rank-r truncation of the thresholded observations ``F(Y)``.

    Under partial observation the thresholded matrix is divided by ``p``
    (when ``scale_step_by_inv_p``) to undo the shrinkage from sampling.
    """
    Y = _check_inputs(Y, config, mask)
    D = threshold(Y, config.gamma, mask).values
    if mask is not None and config.scale_step_by_inv_p:
        D = D / mask.rate_p
    try:
        return truncated_svd(D, config.rank_r)
    except DegenerateRankError as exc:
        raise DegenerateRankError(
            f"initialization failed: thresholded observations have rank < {config.rank_r} ({exc})"
        ) from exc


def step_from_gradient(L, D, eta, retraction):
    """Move from ``L`` along ``-eta * P(D)`` with the chosen retraction."""
    if retraction == "projective":
        return retract_projective(L, -eta * project_tangent(L, D))
    # Orthographic: only D V and U^T D are needed since P(D) V = D V and
    # U^T P(D) = U^T D.
    U, s, V = L.U, L.sigma, L.V
    DV = D @ V
    UtD = U.T @ D
    W = np.diag(s) - eta * (U.T @ DV)
    A = U * s - eta * DV
    B = V * s - eta * UtD.T
    return _oblique(A, W, B, L.rank)


def step(L, Y, config, mask=None):
    """One manifold gradient step from ``L``."""
    Y = _check_inputs(Y, config, mask)
    D = threshold(L.dense() - Y, config.gamma, mask).values
    return step_from_gradient(L, D, config.effective_eta(mask), config.retraction)


def _observed_norm(Y, mask):
    if mask is None:
        return float(np.linalg.norm(Y))
    return float(np.linalg.norm(Y[mask.observed]))


class _Loop:
    """Bookkeeping shared by the manifold solver and the factored baseline."""

    def __init__(self, Y, config, mask, reference):
        self.config = config
        self.mask = mask
        self.reference = None if reference is None else np.asarray(reference, dtype=float)
        self.ref_norm = None if reference is None else float(np.linalg.norm(self.reference))
        self.y_norm = _observed_norm(Y, mask)
        self.trace = IterationTrace()
        self.t0 = time.perf_counter()
        self.best = None
        self.best_score = np.inf
        self.first_score = None
        self.stall = 0

    def record(self, it, iterate, Ld, objective):
        ref_err = None
        if self.reference is not None:
            ref_err = float(np.linalg.norm(Ld - self.reference))
        elapsed = (time.perf_counter() - self.t0) * 1e3
        self.trace.append(it, objective, ref_err, elapsed)
        score = ref_err if ref_err is not None else objective
        if not np.isfinite(score) or not np.isfinite(objective):
            return self.finish("diverged", f"non-finite value at iteration {it}")
        if self.first_score is None:
            self.first_score = score
        if score < self.best_score:
            self.best, self.best_score = iterate, score
            self.trace.best_iter = it
        return self._stop_rule(it, score, objective)

    def _stop_rule(self, it, score, objective):
        tol = self.config.rel_tol
        if self.reference is not None:
            if score <= tol * self.ref_norm:
                return self.finish("converged", f"relative error below {tol:g}")
        else:
            if np.sqrt(2.0 * objective) <= tol * self.y_norm:
                return self.finish("converged", f"relative residual below {tol:g}")
            recs = self.trace.records
            if len(recs) >= 2:
                prev = recs[-2].objective
                change = abs(prev - objective) / max(prev, np.finfo(float).tiny)
                self.stall = self.stall + 1 if change < tol else 0
                if self.stall >= STALL_WINDOW:
                    return self.finish("converged", f"objective change below {tol:g} for {STALL_WINDOW} iterations")
        if score > BLOWUP_FACTOR * max(self.first_score, np.finfo(float).tiny):
            return self.finish("diverged", f"error grew by more than {BLOWUP_FACTOR:g}x at iteration {it}")
        return False

    def finish(self, status, message=""):
        self.trace.status = status
        self.trace.message = message
        return True


def solve(Y, config, mask=None, reference=None, init=None):
    """Run the manifold gradient descent to convergence or ``max_iters``.

    Returns ``(L, trace)``. If the run does not converge, ``L`` is the best
    iterate seen (smallest reference error, or smallest objective without a
    reference) and ``trace.status`` says why it stopped.
    """
    Y = _check_inputs(Y, config, mask)
    L = init if init is not None else initialize(Y, config, mask)
    eta = config.effective_eta(mask)
    loop = _Loop(Y, config, mask, reference)
    it = 0
    while True:
        Ld = L.dense()
        D = threshold(Ld - Y, config.gamma, mask).values
        objective = 0.5 * float(np.vdot(D, D))
        if loop.record(it, L, Ld, objective):
            break
        if it >= config.max_iters:
            loop.finish("maxiter", f"stopped after {it} iterations")
            break
        try:
            L = step_from_gradient(L, D, eta, config.retraction)
        except (DegenerateRankError, RetractionSingularError) as exc:
            loop.finish("failed", f"iteration {it + 1}: {exc}")
            break
        it += 1
    if loop.trace.status == "converged":
        return L, loop.trace
    return loop.best, loop.trace


def sparse_estimate(L, Y, gamma, mask=None):
    """Outlier estimate ``Y - L`` restricted to the entries thresholding removed."""
    Ld = L.dense() if isinstance(L, FactoredLowRank) else np.asarray(L, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Ld.shape != Y.shape:
        raise ParameterError(f"shape mismatch: L {Ld.shape} vs Y {Y.shape}")
    res = threshold(Ld - Y, gamma, mask)
    return np.where(res.zeroed, Y - Ld, 0.0)


__all__ = [
    "SolverConfig",
    "IterationRecord",
    "IterationTrace",
    "ObservationMask",
    "initialize",
    "step",
    "step_from_gradient",
    "solve",
    "sparse_estimate",
]
