import numpy as np
import pytest

from manifold_rpca import probgen
from manifold_rpca.baseline import FactorPair, bm_initialize, bm_solve, bm_step, bm_step_from_gradient
from manifold_rpca.errors import DivergenceError
from manifold_rpca.solver import SolverConfig, initialize
from manifold_rpca.thresholding import hard_threshold


@pytest.fixture(scope="module")
def setting1():
    return probgen.setting1(seed=0)


def test_init_matches_solver(setting1):
    cfg = SolverConfig(5, 0.2, 0.2)
    pair = bm_initialize(setting1.Y, cfg)
    L0 = initialize(setting1.Y, cfg)
    assert np.linalg.norm(pair.dense() - L0.dense()) <= 1e-10 * L0.fro_norm()
    assert pair.imbalance() <= 1e-10
    assert pair.sigma_ref == L0.sigma_1


def test_exact_low_rank():
    L = probgen.gen_low_rank(15, 12, 2, (2.0, 1.0), 3)
    Y = L.dense()
    cfg = SolverConfig(2, 0.0, 0.2)
    pair = bm_initialize(Y, cfg)
    np.testing.assert_allclose(pair.dense(), Y, atol=1e-10)
    nxt = bm_step(pair, Y, cfg)
    np.testing.assert_allclose(nxt.Uf, pair.Uf, atol=1e-12)
    np.testing.assert_allclose(nxt.Vf, pair.Vf, atol=1e-12)
    _, trace = bm_solve(Y, cfg, reference=Y)
    assert trace.converged and trace.iterations == 0


def test_update_formula(rng):
    Uf, Vf = rng.standard_normal((6, 2)), rng.standard_normal((5, 2))
    Y = rng.standard_normal((6, 5))
    pair = FactorPair(Uf, Vf, sigma_ref=2.0, init_norm=1.0)
    D = hard_threshold(Uf @ Vf.T - Y, 0.2).values
    G = Uf.T @ Uf - Vf.T @ Vf
    step = 0.3 / 2.0
    out = bm_step_from_gradient(pair, D, 0.3)
    np.testing.assert_allclose(out.Uf, Uf - step * (D @ Vf + 0.5 * Uf @ G), atol=1e-14)
    np.testing.assert_allclose(out.Vf, Vf - step * (D.T @ Uf - 0.5 * Vf @ G), atol=1e-14)
    plain = bm_step_from_gradient(pair, D, 0.3, balance=False)
    np.testing.assert_allclose(plain.Uf, Uf - step * D @ Vf, atol=1e-14)


def test_blowup_raises(rng):
    pair = FactorPair(np.ones((3, 1)), np.ones((3, 1)), 1.0, 1e-13)
    with pytest.raises(DivergenceError):
        bm_step_from_gradient(pair, np.full((3, 3), 1e3), 10.0)


def test_setting1_converges_at_grid_eta(setting1):
    cfg = SolverConfig(5, 0.2, 0.4, max_iters=1000, rel_tol=1e-6)
    pair, trace = bm_solve(setting1.Y, cfg, reference=setting1.L_dense)
    assert trace.converged
    e = trace.errors()
    assert np.all(np.diff(e[:51]) < 0)
    assert np.linalg.norm(pair.dense() - setting1.L_dense) <= 1e-6 * np.linalg.norm(setting1.L_dense)


def test_large_eta_diverges_without_exception(setting1):
    cfg = SolverConfig(5, 0.2, 2.5, max_iters=300)
    pair, trace = bm_solve(setting1.Y, cfg, reference=setting1.L_dense)
    assert trace.status == "diverged"
    assert isinstance(pair, FactorPair)
    assert np.isfinite(pair.dense()).all()


def test_imbalance_stays_small_on_converging_run(setting1):
    cfg = SolverConfig(5, 0.2, 0.4)
    pair = bm_initialize(setting1.Y, cfg)
    scale = np.linalg.norm(pair.Uf) ** 2
    for _ in range(150):
        pair = bm_step(pair, setting1.Y, cfg)
        assert pair.imbalance() <= 1e-2 * scale


def test_balance_term_shrinks_imbalance(setting1):
    cfg = SolverConfig(5, 0.2, 0.4)
    start = bm_initialize(setting1.Y, cfg)
    skewed = FactorPair(start.Uf * 1.5, start.Vf / 1.5, start.sigma_ref, start.init_norm)
    initial = skewed.imbalance()
    pair = skewed
    for _ in range(150):
        pair = bm_step(pair, setting1.Y, cfg)
        assert pair.imbalance() <= 10 * initial
    assert pair.imbalance() < 0.1 * initial


@pytest.mark.xfail(strict=True, reason="balanced start has imbalance at rounding level, so 10x initial is ~1e-14")
def test_imbalance_ten_times_initial_literal(setting1):
    cfg = SolverConfig(5, 0.2, 0.4)
    pair = bm_initialize(setting1.Y, cfg)
    initial = pair.imbalance()
    for _ in range(150):
        pair = bm_step(pair, setting1.Y, cfg)
        assert pair.imbalance() <= 10 * initial
