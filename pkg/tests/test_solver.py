import numpy as np
import pytest

from manifold_rpca import probgen
from manifold_rpca.errors import DegenerateRankError, ParameterError
from manifold_rpca.manifold import FactoredLowRank
from manifold_rpca.solver import (
    IterationTrace,
    SolverConfig,
    initialize,
    solve,
    sparse_estimate,
    step,
)
from manifold_rpca.thresholding import ObservationMask, hard_threshold


@pytest.fixture(scope="module")
def setting1():
    return probgen.setting1(seed=0)


@pytest.fixture(scope="module")
def low_rank():
    L = probgen.gen_low_rank(20, 25, 3, (3.0, 2.0, 1.0), 7)
    return L, L.dense()


@pytest.mark.parametrize(
    "kw",
    [dict(rank_r=0), dict(gamma=1.0), dict(gamma=-0.1), dict(eta=0.0), dict(retraction="polar"),
     dict(max_iters=-1), dict(rel_tol=0.0), dict(rank_r=1.5)],
)
def test_config_validation(kw):
    base = dict(rank_r=2, gamma=0.1, eta=0.5)
    base.update(kw)
    with pytest.raises(ParameterError):
        SolverConfig(**base)


def test_effective_eta():
    cfg = SolverConfig(2, 0.1, 0.5)
    mask = ObservationMask(np.ones((2, 2), dtype=bool), 0.25)
    assert cfg.effective_eta() == 0.5
    assert cfg.effective_eta(mask) == 2.0
    cfg.scale_step_by_inv_p = False
    assert cfg.effective_eta(mask) == 0.5


def test_initialize_exact_when_nothing_thresholded(low_rank):
    L, Y = low_rank
    L0 = initialize(Y, SolverConfig(3, 0.0, 0.7))
    np.testing.assert_allclose(L0.dense(), Y, atol=1e-12)


def test_initialize_is_truncation_of_thresholded(setting1):
    L0 = initialize(setting1.Y, SolverConfig(5, 0.2, 0.7))
    D = hard_threshold(setting1.Y, 0.2).values
    s = np.linalg.svd(D, compute_uv=False)
    assert np.linalg.norm(D - L0.dense()) == pytest.approx(np.sqrt(np.sum(s[5:] ** 2)), rel=1e-8)


def test_initialize_degenerate():
    with pytest.raises(DegenerateRankError):
        initialize(np.outer(np.arange(1.0, 6), np.ones(4)), SolverConfig(2, 0.0, 0.5))


def test_initialize_partial_rescale(setting1):
    mask = probgen.sample_mask(200, 240, 0.5, 3)
    cfg = SolverConfig(5, 0.2, 0.7)
    L0 = initialize(setting1.Y, cfg, mask)
    cfg.scale_step_by_inv_p = False
    L0_raw = initialize(setting1.Y, cfg, mask)
    np.testing.assert_allclose(L0.sigma, L0_raw.sigma / 0.5, rtol=1e-12)


def test_rank_too_large():
    with pytest.raises(ParameterError):
        solve(np.eye(3), SolverConfig(4, 0.0, 0.5))


def test_fixed_point(low_rank):
    L, Y = low_rank
    cfg = SolverConfig(3, 0.0, 0.7)
    L0 = initialize(Y, cfg)
    L1 = step(L0, Y, cfg)
    np.testing.assert_allclose(L1.dense(), L0.dense(), atol=1e-12)


def test_exact_low_rank_converges_at_zero(low_rank):
    L, Y = low_rank
    _, trace = solve(Y, SolverConfig(3, 0.0, 0.7), reference=Y)
    assert trace.converged and len(trace.records) == 1 and trace.iterations == 0
    _, trace = solve(Y, SolverConfig(3, 0.0, 0.7))
    assert trace.converged and trace.records[0].objective < 1e-20


@pytest.mark.parametrize("retraction", ["projective", "orthographic"])
def test_setting1_recovery_and_monotone_start(setting1, retraction):
    cfg = SolverConfig(5, 0.2, 0.7, retraction, max_iters=300, rel_tol=1e-6)
    L, trace = solve(setting1.Y, cfg, reference=setting1.L_dense)
    assert trace.converged
    assert trace.iterations <= 300
    e = trace.errors()
    assert e[-1] <= 1e-6 * np.linalg.norm(setting1.L_dense)
    assert np.all(np.diff(e[:51]) < 0)
    assert L.is_valid()
    assert [r.iter for r in trace.records] == list(range(len(trace.records)))


def test_sparse_support_recovered(setting1):
    L, _ = solve(setting1.Y, SolverConfig(5, 0.2, 0.7), reference=setting1.L_dense)
    S = sparse_estimate(L, setting1.Y, 0.2)
    true = setting1.S_star != 0
    assert (S[true] != 0).mean() >= 0.95
    res = hard_threshold(setting1.Y - L.dense(), 0.2).values
    np.testing.assert_allclose(S + res, setting1.Y - L.dense(), atol=1e-12)


def test_sparse_estimate_trivial(low_rank):
    L, Y = low_rank
    assert not sparse_estimate(Y, Y, 0.3).any()
    assert not sparse_estimate(Y + 1.0, Y, 0.0).any()
    with pytest.raises(ParameterError):
        sparse_estimate(np.zeros((2, 2)), Y, 0.1)


def test_full_mask_matches_no_mask(setting1):
    cfg = SolverConfig(5, 0.2, 0.7, max_iters=30)
    La, ta = solve(setting1.Y, cfg, reference=setting1.L_dense)
    Lb, tb = solve(setting1.Y, cfg, mask=ObservationMask.full(200, 240), reference=setting1.L_dense)
    np.testing.assert_array_equal(La.dense(), Lb.dense())
    np.testing.assert_array_equal(ta.errors(), tb.errors())


def test_deterministic(setting1):
    cfg = SolverConfig(5, 0.2, 0.7, "projective", max_iters=25)
    _, ta = solve(setting1.Y, cfg, reference=setting1.L_dense)
    _, tb = solve(setting1.Y, cfg, reference=setting1.L_dense)
    np.testing.assert_array_equal(ta.objectives(), tb.objectives())
    np.testing.assert_array_equal(ta.errors(), tb.errors())


def test_maxiter_returns_best(setting1):
    cfg = SolverConfig(5, 0.2, 0.7, max_iters=5)
    L, trace = solve(setting1.Y, cfg, reference=setting1.L_dense)
    assert trace.status == "maxiter" and trace.iterations == 5
    best = int(np.nanargmin(trace.errors()))
    assert trace.best_iter == best
    assert probgen.frob_error(L, setting1.L_dense) == pytest.approx(trace.errors()[best], rel=1e-12)


def test_divergence_flagged(setting1):
    cfg = SolverConfig(5, 0.2, 60.0, "projective", max_iters=200)
    _, trace = solve(setting1.Y, cfg, reference=setting1.L_dense)
    assert trace.status in ("diverged", "failed", "maxiter")
    assert not trace.converged


def test_no_reference_stops_on_objective(setting1):
    cfg = SolverConfig(5, 0.2, 0.7, max_iters=400, rel_tol=1e-6)
    _, trace = solve(setting1.Y, cfg)
    assert trace.converged
    assert all(r.ref_error is None for r in trace.records)


def test_trace_helpers():
    t = IterationTrace()
    t.append(0, 4.0, 2.0, 0.0)
    t.append(1, 5.0, 1.0, 0.1)
    t.append(2, 1.0, 0.001, 0.2)
    assert t.objective_increases() == [1]
    assert t.first_iter_below(1e-2, 1.0) == 2
    with pytest.raises(ValueError):
        t.append(2, 1.0, None, 0.3)


@pytest.mark.slow
def test_partial_observation_recovery():
    pr = probgen.setting1(seed=1, p=0.2)
    cfg = SolverConfig(5, 0.2, 0.7, max_iters=1000, rel_tol=1e-4)
    _, trace = solve(pr.Y, cfg, pr.mask, reference=pr.L_dense)
    assert trace.converged


def test_init_argument_used(low_rank):
    L, Y = low_rank
    start = FactoredLowRank(L.U, L.sigma * 1.1, L.V)
    _, trace = solve(Y, SolverConfig(3, 0.0, 0.5, max_iters=3), init=start, reference=Y)
    assert trace.records[0].ref_error == pytest.approx(0.1 * np.linalg.norm(Y), rel=1e-10)
