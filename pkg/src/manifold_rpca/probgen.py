"""Synthetic robust-PCA problems, ground-truth metrics and lemma spot checks.

Randomness comes from ``numpy.random.default_rng(seed)`` (PCG64). Each
generator takes its own seed so problems are reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InputError, ParameterError
from .manifold import (
    FactoredLowRank,
    _fix_signs,
    project_tangent,
    project_tangent_dense,
    retract_orthographic,
    retract_projective,
    retraction_defect,
)
from .thresholding import ObservationMask

SETTING1_SIGMA = (1.0, 1.0, 1.0, 1.0, 1.0)
SETTING2_SIGMA = (10.0, 1.0, 1.0, 1.0, 1.0)
ETA_GRID = (0.05, 0.1, 0.2, 0.4, 0.7, 1.0, 1.5, 2.5)

# Rounding slack for the lemma inequalities; some hold with equality.
CHECK_RTOL = 1e-10


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def random_orthonormal(n, r, rng):
    """Haar-distributed ``n x r`` matrix with orthonormal columns."""
    Q, R = np.linalg.qr(rng.standard_normal((n, r)))
    return Q * np.sign(np.diag(R))


def gen_low_rank(n1, n2, r, sigma_spec, rng_seed=None):
    sigma = np.asarray(sigma_spec, dtype=float)
    if sigma.shape != (r,):
        raise ParameterError(f"sigma_spec must have length r={r}, got {sigma.shape}")
    if np.any(sigma <= 0) or np.any(np.diff(sigma) > 0):
        raise ParameterError("sigma_spec must be positive and non-increasing")
    if not 1 <= r <= min(n1, n2):
        raise ParameterError(f"rank {r} outside [1, {min(n1, n2)}]")
    rng = _rng(rng_seed)
    U = random_orthonormal(n1, r, rng)
    V = random_orthonormal(n2, r, rng)
    U, V = _fix_signs(U, V)
    return FactoredLowRank(U, sigma.copy(), V)


def _sample_support(n1, n2, per_col, row_cap, rng):
    """Random support with exactly ``per_col`` entries per column, ``<= row_cap`` per row.

    Columns are filled in random order; each takes the rows with the most
    remaining capacity, ties broken by a fresh random permutation. Choosing
    largest-residual rows first keeps the remaining problem feasible whenever
    the original one is.
    """
    support = np.zeros((n1, n2), dtype=bool)
    remaining = np.full(n1, row_cap, dtype=np.int64)
    for j in rng.permutation(n2):
        perm = rng.permutation(n1)
        order = perm[np.argsort(-remaining[perm], kind="stable")]
        rows = order[:per_col]
        if np.any(remaining[rows] <= 0):
            raise ParameterError("corruption caps are infeasible")
        support[rows, j] = True
        remaining[rows] -= 1
    return support


def corrupt(L_star, gamma_star=None, per_column_count=None, value_std=1.0, rng_seed=None,
            mode="replace"):
    """Corrupt a sparse support of ``L_star``; returns ``(S_star, Y)``.

    ``mode="replace"`` overwrites entries with N(0, value_std^2) draws,
    ``mode="add"`` adds the draws instead. Each column gets exactly
    ``per_column_count`` entries (default ``floor(gamma_star * n1)``) and each
    row at most ``floor(gamma_star * n2)``. When only ``per_column_count`` is
    given, the row cap is the smallest feasible one, ``ceil(count * n2 / n1)``.
    """
    L = L_star.dense() if isinstance(L_star, FactoredLowRank) else np.asarray(L_star, dtype=float)
    n1, n2 = L.shape
    if per_column_count is None and gamma_star is None:
        raise ParameterError("give gamma_star or per_column_count")
    if gamma_star is None:
        # smallest row cap that can host the requested column counts
        row_cap = math.ceil(per_column_count * n2 / n1)
        gamma_star = max(per_column_count / n1, row_cap / n2)
    else:
        if per_column_count is None:
            per_column_count = int(math.floor(round(gamma_star * n1, 9)))
        row_cap = int(math.floor(round(gamma_star * n2, 9)))
    if not 0.0 <= gamma_star < 1.0:
        raise ParameterError(f"gamma_star must lie in [0, 1), got {gamma_star}")
    if per_column_count > n1 or per_column_count * n2 > row_cap * n1:
        raise ParameterError(
            f"{per_column_count} per column with at most {row_cap} per row is infeasible "
            f"for a {n1}x{n2} matrix"
        )
    if mode not in ("replace", "add"):
        raise ParameterError(f"unknown corruption mode {mode!r}")
    rng = _rng(rng_seed)
    if per_column_count == 0:
        return np.zeros_like(L), L.copy()
    support = _sample_support(n1, n2, per_column_count, row_cap, rng)
    values = rng.standard_normal(int(support.sum())) * value_std
    Y = L.copy()
    if mode == "replace":
        Y[support] = values
    else:
        Y[support] += values
    S = np.where(support, Y - L, 0.0)
    return S, Y


def in_sparsity_class(S, gamma_star):
    """Row/column nonzero counts within ``gamma_star`` times the line length."""
    nz = np.asarray(S) != 0
    n1, n2 = nz.shape
    tol = 1e-9
    return bool(
        np.all(nz.sum(axis=1) <= gamma_star * n2 + tol)
        and np.all(nz.sum(axis=0) <= gamma_star * n1 + tol)
    )


def sample_mask(n1, n2, p, rng_seed=None):
    if not 0.0 < p <= 1.0:
        raise ParameterError(f"p must lie in (0, 1], got {p}")
    if p == 1.0:
        return ObservationMask.full(n1, n2)
    rng = _rng(rng_seed)
    obs = rng.random((n1, n2)) < p
    return ObservationMask(obs, float(p))


def add_noise(Y, sigma_noise, rng_seed=None):
    if sigma_noise < 0:
        raise ParameterError("sigma_noise must be non-negative")
    Y = np.asarray(Y, dtype=float)
    if sigma_noise == 0:
        return Y.copy()
    rng = _rng(rng_seed)
    return Y + sigma_noise * rng.standard_normal(Y.shape)


def incoherence(L):
    """Smallest mu with ``||U||_{2,inf}^2 <= mu r / n1`` and likewise for ``V``."""
    n1, n2 = L.shape
    r = L.rank
    mu_u = n1 / r * np.max(np.sum(L.U**2, axis=1))
    mu_v = n2 / r * np.max(np.sum(L.V**2, axis=1))
    return float(max(mu_u, mu_v))


def frob_error(L, L_ref):
    """``||L - L_ref||_F`` without densifying when both sides are factored."""
    if isinstance(L_ref, FactoredLowRank):
        if L.shape != L_ref.shape:
            raise InputError(f"shape mismatch {L.shape} vs {L_ref.shape}")
        A = np.hstack([L.U, L_ref.U])
        B = np.hstack([L.V, L_ref.V])
        core = np.diag(np.concatenate([L.sigma, -L_ref.sigma]))
        _, Ra = np.linalg.qr(A)
        _, Rb = np.linalg.qr(B)
        return float(np.linalg.norm(Ra @ core @ Rb.T))
    L_ref = np.asarray(L_ref, dtype=float)
    Ld = L.dense() if isinstance(L, FactoredLowRank) else np.asarray(L, dtype=float)
    if Ld.shape != L_ref.shape:
        raise InputError(f"shape mismatch {Ld.shape} vs {L_ref.shape}")
    return float(np.linalg.norm(Ld - L_ref))


@dataclass
class SyntheticProblem:
    L_star: FactoredLowRank
    S_star: np.ndarray
    Y: np.ndarray
    N_star: Optional[np.ndarray] = None
    mask: Optional[ObservationMask] = None
    meta: dict = field(default_factory=dict)

    @property
    def L_dense(self):
        return self.L_star.dense()


def make_problem(n1=200, n2=240, r=5, sigma_spec=None, per_column_count=None, gamma_star=None,
                 value_std=1.0, p=None, sigma_noise=0.0, seed=0, mode="replace"):
    """Bundle low-rank truth, corruption, optional noise and optional mask.

    Defaults give the desk-scale Setting 1: 200 x 240, r = 5, unit spectrum,
    5% of every column replaced.
    """
    if sigma_spec is None:
        sigma_spec = (1.0,) * r
    if per_column_count is None and gamma_star is None:
        per_column_count = int(round(0.05 * n1))
    seeds = np.random.SeedSequence(seed).spawn(4)
    L = gen_low_rank(n1, n2, r, sigma_spec, np.random.default_rng(seeds[0]))
    S, Y = corrupt(L, gamma_star=gamma_star, per_column_count=per_column_count,
                   value_std=value_std, rng_seed=np.random.default_rng(seeds[1]), mode=mode)
    N = None
    if sigma_noise > 0:
        Yn = add_noise(Y, sigma_noise, np.random.default_rng(seeds[2]))
        N = Yn - Y
        Y = Yn
    mask = None
    if p is not None and p < 1.0:
        mask = sample_mask(n1, n2, p, np.random.default_rng(seeds[3]))
    nz = S != 0
    meta = {
        "r": r,
        "mu": incoherence(L),
        "kappa": L.kappa,
        "gamma_star": float(max(nz.sum(axis=0).max() / n1, nz.sum(axis=1).max() / n2)),
        "sigma_noise": float(sigma_noise),
        "seed": seed,
    }
    return SyntheticProblem(L, S, Y, N, mask, meta)


def setting1(n1=200, n2=240, seed=0, **kw):
    kw.setdefault("per_column_count", int(round(0.05 * n1)))
    return make_problem(n1, n2, 5, SETTING1_SIGMA, seed=seed, **kw)


def setting2(n1=200, n2=240, seed=0, corrupted=True, **kw):
    """Condition number 10. ``corrupted=False`` gives the literal ``Y = L*`` variant."""
    if corrupted:
        kw.setdefault("per_column_count", int(round(0.02 * n1)))
    else:
        kw["per_column_count"] = 0
    return make_problem(n1, n2, 5, SETTING2_SIGMA, seed=seed, **kw)


@dataclass
class TheoryCheckReport:
    """Outcome of checking one or more inequalities ``lhs <= rhs``."""

    a: float
    checks: dict = field(default_factory=dict)
    skipped: bool = False
    reason: str = ""

    def add(self, name, lhs, rhs):
        ok = lhs <= rhs + CHECK_RTOL * max(abs(rhs), abs(lhs))
        self.checks[name] = (float(lhs), float(rhs), bool(ok))

    @property
    def passed(self):
        return not self.skipped and all(ok for _, _, ok in self.checks.values())

    def slack(self, name):
        lhs, rhs, _ = self.checks[name]
        return rhs - lhs


def check_lemma_approximation(L, L_star):
    """Tangent-space approximation bounds for ``L - L*`` at both points.

    With ``a = ||L - L*||_F / sigma_r(L*) <= 1``::

        ||(L-L*) - P_{T_L}(L-L*)||_F   <= a / (2(1-a)) ||L-L*||_F
        ||(L-L*) - P_{T_L*}(L-L*)||_F  <= a / 2        ||L-L*||_F
    """
    E = L.dense() - L_star.dense()
    err = float(np.linalg.norm(E))
    a = err / L_star.sigma_r
    report = TheoryCheckReport(a=a)
    if a > 1:
        report.skipped = True
        report.reason = f"precondition a <= 1 violated (a = {a:.4g})"
        return report
    normal_L = np.linalg.norm(E - project_tangent_dense(L, E))
    normal_star = np.linalg.norm(E - project_tangent_dense(L_star, E))
    rhs1 = a / (2 * (1 - a)) * err if a < 1 else np.inf
    report.add("control1", normal_L, rhs1)
    report.add("control2", normal_star, a / 2 * err)
    return report


def check_lemma_retraction(base, delta):
    """``||R_i(d) - (X + d)||_F <= ||d||_F^2 / (2 (sigma_r(X) - ||d||_2))`` for both retractions."""
    op_norm = delta.spectral_norm()
    fro = delta.fro_norm()
    report = TheoryCheckReport(a=op_norm / base.sigma_r)
    if op_norm >= base.sigma_r:
        report.skipped = True
        report.reason = f"precondition ||delta|| < sigma_r violated ({op_norm:.4g} >= {base.sigma_r:.4g})"
        return report
    bound = fro**2 / (2 * (base.sigma_r - op_norm))
    d1 = retraction_defect(retract_projective(base, delta), base, delta)
    d2 = retraction_defect(retract_orthographic(base, delta), base, delta)
    report.add("projective", d1, bound)
    report.add("orthographic", d2, bound)
    report.add("projective_le_orthographic", d1, d2)
    return report


def random_tangent(base, rng, scale=1.0):
    """Random tangent vector at ``base`` with Frobenius norm ``scale``."""
    n1, n2 = base.shape
    t = project_tangent(base, rng.standard_normal((n1, n2)))
    return t * (scale / t.fro_norm())
