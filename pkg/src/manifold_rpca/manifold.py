"""Geometry of the manifold of rank-r matrices.

Points are kept as a thin SVD ``U diag(sigma) V^T``; tangent vectors at a point
are kept as ``(M, Up, Vp)`` meaning ``U M V^T + Up V^T + U Vp^T`` with
``U^T Up = 0`` and ``V^T Vp = 0``. Nothing here forms a dense ``n1 x n2``
matrix unless asked to (``dense()``), except where the input already is one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRankError, InputError, RetractionSingularError
from .thresholding import ThresholdedResidual

COLLAPSE_RTOL = 1e-14
MAX_MIDDLE_COND = 1e12


def _fix_signs(U, V):
    # largest-magnitude entry of each left singular vector made positive
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, V * signs


@dataclass(frozen=True)
class FactoredLowRank:
    """A rank-r matrix ``U @ diag(sigma) @ V.T`` with orthonormal ``U``, ``V``."""

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    @property
    def shape(self):
        return (self.U.shape[0], self.V.shape[0])

    @property
    def rank(self):
        return self.sigma.shape[0]

    @property
    def sigma_1(self):
        return float(self.sigma[0])

    @property
    def sigma_r(self):
        return float(self.sigma[-1])

    @property
    def kappa(self):
        return self.sigma_1 / self.sigma_r

    def dense(self):
        return (self.U * self.sigma) @ self.V.T

    def fro_norm(self):
        return float(np.linalg.norm(self.sigma))

    def __matmul__(self, W):
        return self.U @ (self.sigma[:, None] * (self.V.T @ W))

    def rmatmul_t(self, W):
        """``W.T @ self`` computed through the factors, returned as ``(r', n2)``."""
        return ((W.T @ self.U) * self.sigma) @ self.V.T

    def is_valid(self, tol=1e-10):
        r = self.rank
        return (
            np.linalg.norm(self.U.T @ self.U - np.eye(r), 2) <= tol
            and np.linalg.norm(self.V.T @ self.V - np.eye(r), 2) <= tol
            and np.all(np.diff(self.sigma) <= 0)
            and self.sigma[-1] > 0
        )


def _from_small_svd(QA, QB, u, s, vt, r):
    if s[r - 1] <= COLLAPSE_RTOL * s[0] or s[0] == 0:
        raise DegenerateRankError(
            f"rank collapse: sigma_r = {s[r - 1]:.3e}, sigma_1 = {s[0]:.3e}"
        )
    U = QA @ u[:, :r]
    V = QB @ vt[:r].T
    U, V = _fix_signs(U, V)
    return FactoredLowRank(U, s[:r].copy(), V)


def truncated_svd(A, r):
    """Best rank-``r`` Frobenius approximation of a dense matrix."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise InputError(f"expected a matrix, got shape {A.shape}")
    if not 1 <= r <= min(A.shape):
        raise InputError(f"rank {r} outside [1, {min(A.shape)}] for shape {A.shape}")
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    if s[0] == 0 or s[r - 1] <= COLLAPSE_RTOL * s[0]:
        raise DegenerateRankError(
            f"matrix has numerical rank below {r} (sigma_r = {s[r - 1]:.3e})"
        )
    U, V = _fix_signs(u[:, :r], vt[:r].T)
    return FactoredLowRank(U, s[:r].copy(), V)


@dataclass(frozen=True)
class TangentVector:
    """Element of the tangent space at ``base`` in factored form."""

    base: FactoredLowRank
    M: np.ndarray
    Up: np.ndarray
    Vp: np.ndarray

    def dense(self):
        U, V = self.base.U, self.base.V
        return U @ self.M @ V.T + self.Up @ V.T + U @ self.Vp.T

    def fro_norm(self):
        # the three components are mutually orthogonal
        return float(np.sqrt(np.sum(self.M**2) + np.sum(self.Up**2) + np.sum(self.Vp**2)))

    def core(self, shift=None):
        """Return ``(QA, C, QB)`` with orthonormal ``QA``, ``QB`` and ``self = QA C QB^T``.

        With ``shift`` (a length-r vector) the core represents
        ``U diag(shift) V^T + self`` instead.
        """
        U, V = self.base.U, self.base.V
        r = self.base.rank
        # QR of [U, Up] stays orthonormal even when Up is rank-deficient
        QA, RA = np.linalg.qr(np.hstack([U, self.Up]))
        QB, RB = np.linalg.qr(np.hstack([V, self.Vp]))
        K = np.block([[self.M, np.eye(r)], [np.eye(r), np.zeros((r, r))]])
        if shift is not None:
            K[:r, :r] += np.diag(shift)
        return QA, RA @ K @ RB.T, QB

    def spectral_norm(self):
        _, C, _ = self.core()
        return float(np.linalg.norm(C, 2))

    def is_zero(self):
        return not (self.M.any() or self.Up.any() or self.Vp.any())

    def _scaled(self, c):
        return TangentVector(self.base, c * self.M, c * self.Up, c * self.Vp)

    def __mul__(self, c):
        return self._scaled(float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return self._scaled(-1.0)

    def __add__(self, other):
        if other.base is not self.base:
            raise InputError("tangent vectors live at different base points")
        return TangentVector(self.base, self.M + other.M, self.Up + other.Up, self.Vp + other.Vp)


def zero_tangent(base):
    n1, n2 = base.shape
    r = base.rank
    return TangentVector(base, np.zeros((r, r)), np.zeros((n1, r)), np.zeros((n2, r)))


def _as_array(D):
    if isinstance(D, ThresholdedResidual):
        return D.values
    if isinstance(D, FactoredLowRank):
        return D.dense()
    return np.asarray(D, dtype=float)


def project_tangent(base, D):
    """Orthogonal projection of an ambient matrix onto the tangent space.

    Equals ``U U^T D + D V V^T - U U^T D V V^T`` but only forms ``D V`` and
    ``U^T D``.
    """
    D = _as_array(D)
    if D.shape != base.shape:
        raise InputError(f"shape mismatch: D {D.shape} vs base {base.shape}")
    U, V = base.U, base.V
    DV = D @ V
    DtU = D.T @ U
    M = U.T @ DV
    Up = DV - U @ M
    Vp = DtU - V @ M.T
    return TangentVector(base, M, Up, Vp)


def project_tangent_dense(base, D):
    """Dense reference formula for :func:`project_tangent`."""
    D = _as_array(D)
    PU = base.U @ base.U.T
    PV = base.V @ base.V.T
    return PU @ D + D @ PV - PU @ D @ PV


def retract_projective(base, delta, method="factored"):
    """Nearest rank-r matrix to ``base + delta``.

    ``method="factored"`` works on the rank <= 2r sum through a 2r x 2r core
    SVD; ``method="dense"`` runs a full SVD of the materialized sum.
    """
    r = base.rank
    if delta.is_zero():
        return base
    if method == "dense":
        return truncated_svd(base.dense() + delta.dense(), r)
    if method != "factored":
        raise ValueError(f"unknown method {method!r}")
    QA, C, QB = delta.core(shift=base.sigma)
    u, s, vt = np.linalg.svd(C)
    return _from_small_svd(QA, QB, u, s, vt, r)


def _oblique(A, W, B, r):
    """SVD form of ``A W^{-1} B^T`` with a conditioning guard on ``W``."""
    cond = np.linalg.cond(W)
    if not np.isfinite(cond) or cond > MAX_MIDDLE_COND:
        raise RetractionSingularError(f"middle matrix condition number {cond:.3e}")
    Qa, Ra = np.linalg.qr(A)
    Qb, Rb = np.linalg.qr(B)
    core = Ra @ np.linalg.solve(W, Rb.T)
    u, s, vt = np.linalg.svd(core)
    return _from_small_svd(Qa, Qb, u, s, vt, r)


def retract_orthographic(base, delta):
    """``(X+d) V [U^T (X+d) V]^{-1} U^T (X+d)`` refactored into SVD form."""
    r = base.rank
    if delta.is_zero():
        return base
    W = np.diag(base.sigma) + delta.M
    A = base.U @ W + delta.Up
    B = base.V @ W.T + delta.Vp
    return _oblique(A, W, B, r)


def retract_orthographic_qr_variant(Lk, D, eta, Q, R):
    """Orthographic update of ``Lk - eta*D`` through arbitrary bases ``Q``, ``R``.

    ``Q`` must span the column space of ``Lk`` and ``R`` its row space; the
    canonical choice is ``Q = U``, ``R = V``.
    """
    D = _as_array(D)
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    if isinstance(Lk, FactoredLowRank):
        r = Lk.rank
        LR = Lk @ R
        QtL = Lk.rmatmul_t(Q)
    else:
        Lk = np.asarray(Lk, dtype=float)
        r = Q.shape[1]
        LR = Lk @ R
        QtL = Q.T @ Lk
    if D.shape != (Q.shape[0], R.shape[0]) or Q.shape[1] != r or R.shape[1] != r:
        raise InputError("Q, R, D and Lk have inconsistent shapes")
    if np.linalg.matrix_rank(Q) < r or np.linalg.matrix_rank(R) < r:
        raise InputError("Q and R must have r independent columns")
    A = LR - eta * (D @ R)
    Bt = QtL - eta * (Q.T @ D)
    W = Bt @ R
    return _oblique(A, W, Bt.T, r)


def retraction_defect(retracted, base, delta):
    """``||R(delta) - (base + delta)||_F`` via a small core, no dense matrices."""
    if delta.is_zero() and retracted is base:
        return 0.0
    QA, C, QB = delta.core(shift=base.sigma)
    # stack [R(delta)] - [X + delta] as one factored difference
    A = np.hstack([retracted.U, QA])
    B = np.hstack([retracted.V, QB])
    k = retracted.rank
    core = np.zeros((k + C.shape[0], k + C.shape[1]))
    core[:k, :k] = np.diag(retracted.sigma)
    core[k:, k:] = -C
    _, Ra = np.linalg.qr(A)
    _, Rb = np.linalg.qr(B)
    return float(np.linalg.norm(Ra @ core @ Rb.T))
