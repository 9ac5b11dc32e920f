"""Factored (Burer-Monteiro) gradient descent on ``L = Uf Vf^T``.

This is the comparison method: same thresholded objective, but plain gradient
steps on the two factors plus the usual balancing term
``1/8 ||Uf^T Uf - Vf^T Vf||_F^2``. Steps are normalised by ``sigma_1`` of the
initial iterate so one step-size grid serves both methods.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRankError, DivergenceError
from .solver import _check_inputs, _Loop, initialize
from .thresholding import threshold

BLOWUP = 1e12


@dataclass(frozen=True)
class FactorPair:
    Uf: np.ndarray
    Vf: np.ndarray
    sigma_ref: float = 1.0
    init_norm: float = 0.0

    @property
    def shape(self):
        return (self.Uf.shape[0], self.Vf.shape[0])

    @property
    def rank(self):
        return self.Uf.shape[1]

    def dense(self):
        return self.Uf @ self.Vf.T

    def imbalance(self):
        return float(np.linalg.norm(self.Uf.T @ self.Uf - self.Vf.T @ self.Vf))

    def _norm(self):
        return float(np.hypot(np.linalg.norm(self.Uf), np.linalg.norm(self.Vf)))


def bm_initialize(Y, config, mask=None):
    """Balanced split ``U sqrt(S)``, ``V sqrt(S)`` of the manifold solver's start point."""
    L0 = initialize(Y, config, mask)
    root = np.sqrt(L0.sigma)
    Uf = L0.U * root
    Vf = L0.V * root
    init_norm = float(np.hypot(np.linalg.norm(Uf), np.linalg.norm(Vf)))
    return FactorPair(Uf, Vf, sigma_ref=L0.sigma_1, init_norm=init_norm)


def bm_step_from_gradient(pair, D, eta, balance=True):
    """Simultaneous gradient update of both factors given ``D = F(Uf Vf^T - Y)``."""
    Uf, Vf = pair.Uf, pair.Vf
    step = eta / pair.sigma_ref
    gU = D @ Vf
    gV = D.T @ Uf
    if balance:
        G = Uf.T @ Uf - Vf.T @ Vf
        gU = gU + 0.5 * Uf @ G
        gV = gV - 0.5 * Vf @ G
    new = FactorPair(Uf - step * gU, Vf - step * gV, pair.sigma_ref, pair.init_norm)
    norm = new._norm()
    if not np.isfinite(norm) or (pair.init_norm > 0 and norm > BLOWUP * pair.init_norm):
        raise DivergenceError(f"factor norm {norm:.3e} exceeds {BLOWUP:g} x initial")
    return new


def bm_step(pair, Y, config, mask=None, balance=True):
    Y = _check_inputs(Y, config, mask)
    D = threshold(pair.dense() - Y, config.gamma, mask).values
    return bm_step_from_gradient(pair, D, config.effective_eta(mask), balance)


def bm_solve(Y, config, mask=None, reference=None, balance=True):
    """Factored gradient descent; same stopping rules and trace schema as ``solve``."""
    Y = _check_inputs(Y, config, mask)
    pair = bm_initialize(Y, config, mask)
    eta = config.effective_eta(mask)
    loop = _Loop(Y, config, mask, reference)
    it = 0
    while True:
        Ld = pair.dense()
        D = threshold(Ld - Y, config.gamma, mask).values if np.all(np.isfinite(Ld)) else Ld
        objective = 0.5 * float(np.vdot(D, D))
        if loop.record(it, pair, Ld, objective):
            break
        if it >= config.max_iters:
            loop.finish("maxiter", f"stopped after {it} iterations")
            break
        try:
            pair = bm_step_from_gradient(pair, D, eta, balance)
        except (DivergenceError, DegenerateRankError) as exc:
            loop.finish("diverged", f"iteration {it + 1}: {exc}")
            break
        it += 1
    if loop.trace.status == "converged":
        return pair, loop.trace
    return loop.best, loop.trace
