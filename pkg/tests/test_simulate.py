import math

import numpy as np
import pytest

from habitpolicy.errors import ValidationError
from habitpolicy.simulate import (
    PolicyTable,
    SimConfig,
    _step_block,
    drift_diffusion,
    mc_value,
    path_rng,
    reconstruct_wealth,
    simulate_path,
    tail_bound,
)


def test_drift_diffusion_vanish_at_floor(base_policy):
    b, a = drift_diffusion(base_policy, base_policy.x_floor)
    assert b == pytest.approx(0.0, abs=1e-12)
    assert a == 0.0


def test_drift_slope_at_floor(base_policy, base_consts):
    # on the constrained branch b(x) = (x - x_floor) * b0 exactly, with
    # b0 = r + rho(1-alpha) + ((mu-r)/sigma)^2 (1-lam) = 0.27 + 0.25*2.2151176
    pol = base_policy
    c = base_consts
    p = c.params
    b0 = p.r + p.rho * (1.0 - p.alpha) + ((p.mu - p.r) / p.sigma) ** 2 * (1.0 - c.lam)
    d = 0.1 * (pol.x_star - pol.x_floor)
    b, _ = drift_diffusion(pol, pol.x_floor + d)
    assert b / d == pytest.approx(b0, rel=1e-12)
    assert b0 == pytest.approx(0.823779, abs=1e-6)


def test_drift_diffusion_continuous_at_x_star(base_policy):
    pol = base_policy
    b1, a1 = drift_diffusion(pol, pol.x_star * (1.0 - 1e-9))
    b2, a2 = drift_diffusion(pol, pol.x_star * (1.0 + 1e-9))
    assert b2 == pytest.approx(b1, rel=1e-6, abs=1e-9)
    assert a2 == pytest.approx(a1, rel=1e-6)


def test_path_constant_at_floor(base_policy, base_table):
    cfg = SimConfig(dt=1e-3, horizon_T=1.0, n_paths=1, seed=3, x0=base_policy.x_floor)
    path = simulate_path(base_policy, cfg, 0, table=base_table)
    assert np.all(path.x_values == base_policy.x_floor)
    assert path.clamp_count == 0


def test_paths_reproducible(base_policy, base_table):
    cfg = SimConfig(dt=1e-3, horizon_T=0.5, n_paths=4, seed=11, x0=5.0)
    a = simulate_path(base_policy, cfg, 2, table=base_table)
    b = simulate_path(base_policy, cfg, 2, table=base_table)
    assert np.array_equal(a.x_values, b.x_values)
    c = simulate_path(base_policy, cfg, 3, table=base_table)
    assert not np.array_equal(a.x_values, c.x_values)


def test_generator_streams_chunk_invariant():
    # mc_value draws each path's increments in slabs; the concatenated
    # stream must be what a single bulk draw would produce
    a = path_rng(123, 7).standard_normal(2000)
    g = path_rng(123, 7)
    b = np.concatenate([g.standard_normal(500) for _ in range(4)])
    assert np.array_equal(a, b)


def test_single_path_matches_batched_column(base_policy, base_table):
    cfg = SimConfig(dt=1e-3, horizon_T=2.0, n_paths=3, seed=7, x0=5.0)
    ref = simulate_path(base_policy, cfg, 1, table=base_table)
    p = base_policy.consts.params
    gens = [path_rng(cfg.seed, i) for i in range(3)]
    X = np.full(3, cfg.x0)
    col = [X[1]]
    sq = math.sqrt(cfg.dt)
    n = cfg.n_steps
    k = 0
    while k < n:
        m = min(700, n - k)
        eps = np.empty((m, 3))
        for j, g in enumerate(gens):
            eps[:, j] = g.standard_normal(m)
        for s in range(m):
            X = _step_block(X, eps[s], cfg.dt, sq, base_table, p,
                            base_policy.x_floor, base_policy.x_max, [0, 0])
            col.append(X[1])
            k += 1
    assert np.array_equal(np.asarray(col), ref.x_values)


def test_strong_convergence_trend(base_policy, base_table):
    # coupled refinement: the gap between successive dt halvings shrinks
    p = base_policy.consts.params
    n_paths, T = 100, 0.5
    fine_dt = 1e-3
    n_fine = int(round(T / fine_dt))  # 500: divisible through two halvings
    rng = np.random.Generator(np.random.Philox(key=99))
    eps_fine = rng.standard_normal((n_fine, n_paths))

    def run(dt, eps):
        X = np.full(n_paths, 5.0)
        sq = math.sqrt(dt)
        for k in range(eps.shape[0]):
            X = _step_block(X, eps[k], dt, sq, base_table, p,
                            base_policy.x_floor, base_policy.x_max, [0, 0])
        return X

    eps_mid = (eps_fine[0::2] + eps_fine[1::2]) / math.sqrt(2.0)
    eps_coarse = (eps_mid[0::2] + eps_mid[1::2]) / math.sqrt(2.0)
    x_fine = run(fine_dt, eps_fine)
    x_mid = run(2 * fine_dt, eps_mid)
    x_coarse = run(4 * fine_dt, eps_coarse)
    gap_coarse = np.mean(np.abs(x_coarse - x_mid))
    gap_fine = np.mean(np.abs(x_mid - x_fine))
    assert gap_fine < gap_coarse


def test_no_diffusion_paths_deterministic(base_policy):
    # theta scaled to zero removes the Brownian term entirely: every path
    # must coincide (the vanishing-premium limit in miniature)
    cfg = SimConfig(dt=1e-3, horizon_T=1.0, n_paths=50, seed=5, x0=5.0)
    table0 = PolicyTable.build(base_policy, theta_scale=0.0)
    ends = [simulate_path(base_policy, cfg, i, table=table0).x_values[-1] for i in range(10)]
    assert np.var(ends) == 0.0
    table_half = PolicyTable.build(base_policy, theta_scale=0.5)
    e_half = [simulate_path(base_policy, cfg, i, table=table_half).x_values[-1] for i in range(50)]
    e_full = [simulate_path(base_policy, cfg, i).x_values[-1] for i in range(50)]
    assert np.var(e_half) < np.var(e_full)


def test_clamp_counting_and_floor_preservation(base_policy):
    # a deliberately coarse step makes the floor overshoot observable
    x0 = base_policy.x_floor + 0.02 * (base_policy.x_star - base_policy.x_floor)
    cfg = SimConfig(dt=0.2, horizon_T=5.0, n_paths=200, seed=17, x0=x0)
    est = mc_value(base_policy, cfg)
    assert est.clamp_count > 0
    path = simulate_path(base_policy, cfg, 0)
    assert np.all(path.x_values >= base_policy.x_floor)


def test_clamp_frequency_does_not_grow_when_dt_halved(base_policy):
    x0 = base_policy.x_floor + 0.02 * (base_policy.x_star - base_policy.x_floor)
    counts = {}
    for dt in (1e-3, 5e-4):
        cfg = SimConfig(dt=dt, horizon_T=1.0, n_paths=50, seed=21, x0=x0)
        counts[dt] = mc_value(base_policy, cfg).clamp_count
    # at production resolution the floor is unreachable within a step
    assert counts[1e-3] == 0
    assert counts[5e-4] <= max(2 * counts[1e-3], counts[1e-3] + 1) - 1


def test_tail_bound_value(base_policy):
    # e^{-0.3*60} * 0.75^{-1} / 0.3
    expected = math.exp(-18.0) * (0.75 ** -1.0) / 0.3
    assert tail_bound(base_policy, 60.0) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(6.8e-8, rel=0.01)


def test_mc_matches_value_function(base_policy, base_table):
    cfg = SimConfig(dt=2e-3, horizon_T=40.0, n_paths=800, seed=2024, x0=5.0)
    est = mc_value(base_policy, cfg, table=base_table)
    v0 = base_policy.value(cfg.x0)
    tol = 3.0 * est.stderr + est.tail_bound + 5.0 * cfg.dt * abs(v0)
    assert abs(est.mean - v0) <= tol
    assert est.stderr > 0.0
    assert est.cap_count == 0


def test_mc_constant_at_floor(base_policy):
    # constant path, c = alpha: the quadrature integrates a known exponential
    cfg = SimConfig(dt=1e-3, horizon_T=30.0, n_paths=1, seed=1, x0=base_policy.x_floor)
    est = mc_value(base_policy, cfg)
    p = base_policy.consts.params
    exact_trunc = (
        p.alpha ** (1.0 - p.gamma) / (p.delta * (1.0 - p.gamma))
        * (1.0 - math.exp(-p.delta * cfg.horizon_T))
    )
    assert est.mean == pytest.approx(exact_trunc, abs=5e-6)
    assert math.isnan(est.stderr)  # n_paths = 1: not applicable


def test_mc_dominance_of_suboptimal_policies(base_policy):
    cfg = SimConfig(dt=2e-3, horizon_T=30.0, n_paths=400, seed=31, x0=5.0)
    v0 = base_policy.value(cfg.x0)
    for kwargs in (dict(c_scale=0.0), dict(c_scale=1.1), dict(theta_scale=1.25),
                   dict(theta_scale=0.75)):
        est = mc_value(base_policy, cfg, **kwargs)
        assert est.mean <= v0 + 3.0 * est.stderr + est.tail_bound, kwargs


def test_reconstruct_wealth_consistency(base_policy, base_table):
    cfg = SimConfig(dt=1e-3, horizon_T=2.0, n_paths=1, seed=9, x0=4.0)
    path = simulate_path(base_policy, cfg, 0, table=base_table)
    w, z = reconstruct_wealth(path, w0=4.0, policy=base_policy, table=base_table)
    assert np.max(np.abs(w / z - path.x_values)) < 1e-10
    assert np.all(w > 0.0)
    # consumption never falls below alpha * habit
    cs, _ = base_table.lookup(path.x_values)
    assert np.all(cs * z >= base_policy.consts.params.alpha * z * (1.0 - 1e-12))


def test_reconstruct_habit_decay_at_floor(base_policy, base_table):
    p = base_policy.consts.params
    cfg = SimConfig(dt=1e-3, horizon_T=3.0, n_paths=1, seed=9, x0=base_policy.x_floor)
    path = simulate_path(base_policy, cfg, 0, table=base_table)
    w, z = reconstruct_wealth(path, w0=1.0, policy=base_policy, table=base_table)
    expected = (1.0 / base_policy.x_floor) * np.exp(
        -p.rho * (1.0 - p.alpha) * path.times
    )
    assert np.max(np.abs(z / expected - 1.0)) < 1e-12


def test_sim_config_validation(base_policy):
    with pytest.raises(ValidationError):
        SimConfig(dt=0.0, horizon_T=1.0, n_paths=1, seed=0, x0=5.0)
    with pytest.raises(ValidationError):
        SimConfig(dt=0.1, horizon_T=0.05, n_paths=1, seed=0, x0=5.0)
    with pytest.raises(ValidationError):
        SimConfig(dt=0.1, horizon_T=1.0, n_paths=0, seed=0, x0=5.0)
    with pytest.raises(ValidationError):
        SimConfig(dt=0.1, horizon_T=1.0, n_paths=1, seed=-1, x0=5.0)
    cfg = SimConfig(dt=0.1, horizon_T=1.0, n_paths=1, seed=0, x0=1.0)
    with pytest.raises(ValidationError):
        simulate_path(base_policy, cfg, 0)  # x0 below the floor
