import math

import numpy as np
import pytest

from ruinlab import _kernels as K
from ruinlab.chain import simulate_chain
from ruinlab.errors import BadGrid, ImmediateRuin
from ruinlab.mc import McConfig, estimate_ruin, simulate_payout, simulate_ruin
from ruinlab.model import ExponentialClaims, ModelParams
from ruinlab.pathsim import SimGrid, simulate_R, simulate_path
from ruinlab.rng import RngStream

BETA1 = ModelParams(1.0, 1.0, 1.0, 1.0)


def test_deterministic_exit_time():
    res = simulate_path(1.0, ModelParams(0.0, 0.0, 2.0, 0.0), SimGrid(horizon=10.0), RngStream(0))
    assert res.ruined and res.ruin_time == pytest.approx(0.5, abs=1e-12)
    assert res.n_jumps == 0


@pytest.mark.parametrize("u, c", [(1.0, 3.0), (2.5, 0.7), (0.1, 10.0)])
def test_deterministic_exit_within_one_step(u, c):
    grid = SimGrid(dt=1e-2, horizon=50.0)
    res = simulate_path(u, ModelParams(0.0, 0.0, c, 0.0), grid, RngStream(1))
    assert abs(res.ruin_time - u / c) <= grid.dt


def test_deterministic_growth_exit_time():
    # dX = aX - c: ruin at -ln(1 - a u / c) / a when a u < c
    a, c, u = 0.5, 1.0, 1.0
    res = simulate_path(u, ModelParams(a, 0.0, c, 0.0), SimGrid(horizon=10.0), RngStream(0))
    assert res.ruin_time == pytest.approx(-math.log1p(-a * u / c) / a, rel=1e-12)


def test_no_payout_never_ruins():
    for i in range(20):
        res = simulate_path(1.0, ModelParams(0.0, 1.0, 0.0, 0.0), SimGrid(dt=1e-2, horizon=200.0), RngStream(3, i))
        assert not res.ruined and res.ruin_time is None
        assert res.terminal_value > 0


def test_terminal_value_is_geometric_brownian():
    grid = SimGrid(dt=1e-2, horizon=5.0)
    vals = np.array([simulate_path(2.0, ModelParams(0.1, 0.3, 0.0, 0.0), grid, RngStream(9, i)).terminal_value
                     for i in range(4000)])
    eta = np.log(vals / 2.0)
    assert abs(eta.mean() - (0.1 - 0.045) * 5) < 4 * 0.3 * math.sqrt(5 / 4000)
    assert abs(eta.std() - 0.3 * math.sqrt(5)) < 0.03


def test_immediate_ruin():
    for u in (0.0, -1.0):
        with pytest.raises(ImmediateRuin) as info:
            simulate_path(u, BETA1, SimGrid(), RngStream(0))
        assert info.value.result.ruined and info.value.result.ruin_time == 0.0


@pytest.mark.parametrize("kwargs", [dict(dt=0.0), dict(dt=-1e-3), dict(horizon=0.0), dict(dt=2.0, horizon=1.0),
                                    dict(refine_factor=0), dict(refine_factor=1.5), dict(bisections=-1)])
def test_bad_grid(kwargs):
    with pytest.raises(BadGrid):
        SimGrid(**kwargs)


def test_bad_grid_type():
    with pytest.raises(BadGrid):
        simulate_path(1.0, BETA1, "grid", RngStream(0))
    with pytest.raises(BadGrid):
        simulate_R(BETA1, None, RngStream(0))


def test_stream_advances_and_reproduces():
    grid = SimGrid(dt=1e-2, horizon=20.0)
    s1, s2 = RngStream(4, 4), RngStream(4, 4)
    r1 = simulate_path(3.0, BETA1, grid, s1)
    r2 = simulate_path(3.0, BETA1, grid, s2)
    assert r1 == r2 and np.array_equal(r1.jump_values, r2.jump_values)
    assert s1.uctr > 0 and s1.nctr > 0
    assert simulate_path(3.0, BETA1, grid, s1) != r1


def test_single_path_matches_batch_kernel():
    grid = SimGrid(dt=1e-2, horizon=30.0)
    cfg = McConfig(n_paths=50, grid=grid, master_seed=12, cap_tol=0.0)
    rt, st, _, _ = simulate_ruin(np.array([2.0]), BETA1, cfg)
    for i in range(50):
        res = simulate_path(2.0, BETA1, grid, RngStream(12, i))
        assert res.ruined == (st[i, 0] == K.STATUS_RUINED)
        if res.ruined:
            assert res.ruin_time == rt[i, 0]


def test_ruin_time_bounded_by_horizon_and_flag_consistent():
    grid = SimGrid(dt=1e-2, horizon=15.0)
    for i in range(200):
        res = simulate_path(1.0, BETA1, grid, RngStream(2, i))
        assert res.ruined == (res.ruin_time is not None)
        if res.ruined:
            assert 0 < res.ruin_time <= grid.horizon


def test_recorded_jumps_match_count():
    res = simulate_path(50.0, BETA1, SimGrid(dt=1e-2, horizon=30.0), RngStream(0, 1))
    assert res.jump_times.size == res.n_jumps
    assert np.all(np.diff(res.jump_times) > 0)


def test_monotone_in_capital_on_shared_noise():
    grid = SimGrid(dt=1e-2, horizon=40.0)
    us = [0.5, 1.0, 2.0, 4.0, 8.0]
    for i in range(300):
        results = [simulate_path(u, BETA1, grid, RngStream(21, i), record=False) for u in us]
        for lo, hi in zip(results, results[1:]):
            if hi.ruined:
                assert lo.ruined and lo.ruin_time <= hi.ruin_time


def test_ruin_implies_discounted_payout_exceeds_capital():
    # Discounted reserve = u + discounted releases - R_t, so ruin forces R >= u.
    grid = SimGrid(dt=1e-2, horizon=60.0)
    params = ModelParams(0.2, 1.0, 1.0, 1.0)
    u = 2.0
    checked = 0
    for i in range(300):
        res = simulate_path(u, params, grid, RngStream(8, i), record=False)
        if not res.ruined:
            continue
        ch = simulate_chain(u, params, res.n_jumps + 1, grid, RngStream(8, i))
        discount = np.concatenate([[1.0], np.cumprod(1.0 / ch.mults)[:-1]])
        payout = np.cumsum(discount * (ch.xis - ch.qs) / ch.mults)
        assert payout[-1] >= u * (1 - 1e-9)
        checked += 1
    assert checked > 50


def test_dual_model_ruin_frequency():
    params = ModelParams(0.0, 0.0, 0.5, 1.0, ExponentialClaims(1.0))
    est = estimate_ruin(2.0, params, McConfig(n_paths=100_000, grid=SimGrid(horizon=200.0)))
    assert abs(est.p_hat - math.exp(-2)) < 3 * est.stderr


def test_payout_deterministic_cases():
    grid = SimGrid(dt=1e-3, horizon=1.0)
    assert simulate_R(ModelParams(1.0, 0.0, 1.0, 1.0), grid, RngStream(0)) == pytest.approx(1 - math.exp(-1), rel=1e-12)
    assert simulate_R(ModelParams(1.0, 1.0, 0.0, 1.0), grid, RngStream(0)) == 0.0


def test_payout_single_matches_batch():
    grid = SimGrid(dt=1e-2, horizon=10.0)
    cfg = McConfig(n_paths=5, grid=grid, master_seed=3)
    batch = simulate_payout(BETA1, cfg)
    for i in range(5):
        assert simulate_R(BETA1, grid, RngStream(3, i)) == batch[i]


@pytest.mark.slow
def test_payout_mean():
    # E R_inf = c / (a - sigma^2) for a = 1.5, sigma = 1
    params = ModelParams(1.5, 1.0, 1.0, 1.0)
    values = simulate_payout(params, McConfig(n_paths=100_000, grid=SimGrid(dt=1e-2, horizon=50.0)))
    assert abs(values.mean() - 2.0) < 0.02


def test_refinement_sharpens_ruin_time_only():
    params = ModelParams(0.0, 1.0, 1.0, 1.0)
    coarse = SimGrid(dt=1e-2, horizon=30.0, refine_factor=1)
    fine = SimGrid(dt=1e-2, horizon=30.0, refine_factor=16)
    for i in range(100):
        a = simulate_path(1.0, params, coarse, RngStream(5, i), record=False)
        b = simulate_path(1.0, params, fine, RngStream(5, i), record=False)
        assert a.ruined == b.ruined
        if a.ruined:
            assert a.ruin_time - coarse.dt <= b.ruin_time <= a.ruin_time


def test_halving_dt_changes_few_indicators():
    params = BETA1
    flips = []
    for levels in (0, 1, 2):
        cfg = McConfig(n_paths=10_000, grid=SimGrid(dt=1e-2, horizon=50.0, bisections=levels), master_seed=1)
        _, st, _, _ = simulate_ruin(np.array([3.0]), params, cfg)
        flips.append(st[:, 0] == K.STATUS_RUINED)
    eps1 = np.mean(flips[0] != flips[1])
    eps2 = np.mean(flips[1] != flips[2])
    print(f"indicator changes on halving dt: {eps1:.4f}, {eps2:.4f}")
    assert eps1 < 0.01 and eps2 < 0.01
