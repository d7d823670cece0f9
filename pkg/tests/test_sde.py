import numpy as np
import pytest

from avghjb import analytic
from avghjb.errors import CensoringExcessive, InvalidConfig
from avghjb.sde import PathStats, SimConfig, estimate_exit_functional, occupation_histogram, simulate_average_cost
from avghjb.valuedet import exit_functional


def w13(x):
    return analytic.w_rho(1 / 3, x)


def test_config_validation():
    for bad in ({"dt": 0.0}, {"T": -1.0}, {"n_paths": 0}, {"n_paths": 2.5}, {"seed": -1}, {"reflect_at": 0.0}):
        with pytest.raises(InvalidConfig):
            SimConfig(**bad)
    with pytest.raises(InvalidConfig):
        simulate_average_cost(None, 0.0, SimConfig(T=0.0))
    assert SimConfig(dt=0.01, T=1.0).n_steps == 100


def test_path_stats():
    s = PathStats.from_samples([1.0, 2.0, 3.0])
    assert s.mean == 2.0 and s.stderr == pytest.approx(1 / np.sqrt(3))
    assert PathStats.from_samples([4.0]).stderr == 0.0
    assert PathStats.from_samples([]).n_samples == 0


def test_determinism_and_path_prefix(example):
    cfg = SimConfig(dt=1e-2, T=5.0, n_paths=8, seed=11)
    a, pa = simulate_average_cost(example, w13, cfg, return_paths=True)
    b, pb = simulate_average_cost(example, w13, cfg, return_paths=True)
    np.testing.assert_array_equal(pa, pb)
    assert a == b
    _, pc = simulate_average_cost(example, w13, SimConfig(dt=1e-2, T=5.0, n_paths=20, seed=11), return_paths=True)
    np.testing.assert_array_equal(pa, pc[:8])
    _, pd = simulate_average_cost(example, w13, SimConfig(dt=1e-2, T=5.0, n_paths=8, seed=12), return_paths=True)
    assert not np.array_equal(pa, pd)


def test_average_cost_compatible_selector(example):
    s = simulate_average_cost(example, w13, SimConfig(dt=1e-2, T=200.0, n_paths=200, seed=1))
    # Euler bias with a discontinuous drift is a few 1e-3 at dt = 1e-2
    assert abs(s.mean - 1 / 3) <= 3 * s.stderr + 5e-3


def test_average_cost_transient_control(example):
    T = 500.0
    s = simulate_average_cost(example, 1.0, SimConfig(dt=1e-2, T=T, n_paths=100, seed=2))
    # E int_0^inf exp(-|t + W_t|) dt = 4/3
    oracle = 1 - (4 / 3) / T
    assert abs(s.mean - oracle) <= 3 * s.stderr + 1e-4
    assert abs(s.mean - 1) <= 5e-3


def test_constant_cost_model(constant):
    s = simulate_average_cost(constant, 0.0, SimConfig(dt=1e-2, T=2.0, n_paths=4))
    assert s.mean == pytest.approx(0.5) and s.stderr == pytest.approx(0.0, abs=1e-15)


def test_exit_inside_ball_is_zero(example):
    e = estimate_exit_functional(example, w13, 1.0, 1.0, 1 / 3, SimConfig(T=5.0, n_paths=10), V=lambda x: x * 0 + 2.0)
    assert e.psi.mean == 0.0 and e.psi.stderr == 0.0
    assert e.identity.mean == 0.0 and e.mean_exit_time == 0.0
    with pytest.raises(InvalidConfig):
        estimate_exit_functional(example, w13, 2.0, 0.0, 1 / 3, SimConfig(T=5.0, n_paths=10))


def test_exit_matches_grid_functional(example, grid, w_policy):
    cfg = SimConfig(dt=1e-3, T=20.0, n_paths=400, seed=5)
    e = estimate_exit_functional(example, w13, 2.0, 1.0, 1 / 3, cfg)
    ef = exit_functional(example, w_policy(1 / 3, grid), 1.0, 1 / 3)
    # discrete entry detection overshoots by O(sqrt(dt)), about 1e-2 here
    assert abs(e.psi.mean - ef.at(2.0)) <= 3 * e.psi.stderr + 2e-2
    assert e.censored_fraction == 0.0
    assert e.mean_exit_time == pytest.approx(1.0, abs=0.1)


def test_exit_identity_with_value(example):
    x = np.linspace(-8, 8, 3201)
    v = analytic.v_rho_panels(1 / 3, x)
    V = lambda y: np.interp(y, x, v)  # noqa: E731
    cfg = SimConfig(dt=1e-3, T=20.0, n_paths=300, seed=9)
    e = estimate_exit_functional(example, w13, 2.0, 1.0, 1 / 3, cfg, V=V)
    assert abs(e.identity.mean) <= 3 * e.identity.stderr + 2e-2


def test_censoring(example):
    cfg = SimConfig(dt=1e-2, T=0.5, n_paths=50, seed=3)
    with pytest.raises(CensoringExcessive):
        estimate_exit_functional(example, w13, 4.0, 1.0, 1 / 3, cfg)


def test_histogram_normalised_and_matches_density(example):
    edges = np.linspace(-4, 4, 33)
    h = occupation_histogram(example, w13, SimConfig(dt=1e-2, T=200.0, n_paths=200, seed=4), edges)
    assert h.mass.sum() == pytest.approx(1.0, abs=1e-12)
    # binned exp(-2|x|)
    cdf = lambda y: np.where(y < 0, 0.5 * np.exp(2 * y), 1 - 0.5 * np.exp(-2 * y))  # noqa: E731
    ref = np.diff(cdf(edges))
    ref /= ref.sum()
    assert 0.5 * np.abs(h.mass - ref).sum() <= 0.05


def test_histogram_reflected_drift_to_wall(example):
    edges = np.linspace(-5, 5, 21)
    h = occupation_histogram(example, 1.0, SimConfig(dt=1e-2, T=100.0, n_paths=10, reflect_at=5.0), edges)
    assert h.mass[-2:].sum() >= 0.5
    with pytest.raises(InvalidConfig):
        occupation_histogram(example, 1.0, SimConfig(T=1.0, n_paths=2), [1.0, 0.0])


def test_halving_dt_is_stable(example):
    a = simulate_average_cost(example, w13, SimConfig(dt=2e-2, T=100.0, n_paths=200, seed=6))
    b = simulate_average_cost(example, w13, SimConfig(dt=1e-2, T=100.0, n_paths=200, seed=6))
    assert abs(a.mean - b.mean) <= 2 * np.hypot(a.stderr, b.stderr) + 5e-3
