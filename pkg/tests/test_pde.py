import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evoshift.discretization import build_grid, integrate
from evoshift.errors import OverflowRisk
from evoshift.model import GrowthRateModel, time_constant_model
from evoshift.pde import (
    LinearState,
    PdeState,
    SolverConfig,
    default_initial_density,
    evolve_linear,
    liouville_backward,
    liouville_forward,
    simulate,
    step_linear,
    step_nonlocal,
)


def _flat(value):
    return GrowthRateModel(1.0, lambda t, x: value + 0.0 * np.asarray(x) + 0.0 * np.asarray(t))


def test_logistic_step_with_uniform_rate():
    # constant rate, flat interior profile: mass obeys the logistic update
    grid = build_grid(1.0, 65)
    dens = np.ones(65)
    dens[0] = dens[-1] = 0.0
    state = PdeState.from_density(grid, 0.0, dens)
    dt = 1e-3
    out = step_nonlocal(state, _flat(1.0), 1e-8, 0.0, grid, dt)
    rho0 = state.mass_rho
    g = np.exp(dt)
    # trapezoid version of the exact logistic factor
    expected = g / (1.0 + 0.5 * dt * (rho0 + g * rho0))
    assert out.density[32] == pytest.approx(expected, rel=1e-6)
    assert out.time == dt


def test_logistic_mass_converges_to_rate():
    grid = build_grid(3.0, 257)
    n0 = PdeState.from_density(grid, 0.0, default_initial_density(grid, 0.0, 0.05, mass=0.1))
    model = time_constant_model(lambda x: 1.0 + 0.0 * x)
    traj = simulate(n0, model, 1e-3, 0.0, grid, SolverConfig(steps_per_period=128, max_periods=60))
    assert traj.verdict in ("Periodic", "Undecided")
    # with sigma small the mass settles near the rate minus a diffusive loss
    assert traj.final_state.mass_rho == pytest.approx(1.0, abs=5e-2)


def test_liouville_round_trip():
    grid = build_grid(6.0, 257)
    v = np.exp(-grid.nodes ** 2)
    st_ = LinearState(0.0, v)
    back = liouville_backward(liouville_forward(st_, 0.8, 0.1, grid), 0.8, 0.1, grid)
    assert np.allclose(back.values, v, rtol=1e-13)
    assert not back.transformed
    with pytest.raises(ValueError):
        liouville_backward(st_, 0.8, 0.1, grid)


def test_liouville_overflow_guard():
    grid = build_grid(6.0, 257)
    with pytest.raises(OverflowRisk):
        liouville_forward(LinearState(0.0, np.ones(257)), 100.0, 0.1, grid)


def test_step_linear_agrees_with_and_without_liouville(ref_model):
    grid = build_grid(6.0, 1025)
    m0 = default_initial_density(grid, 0.0, 0.1)
    a = step_linear(LinearState(0.0, m0), ref_model, 0.05, 0.3, grid, 1e-3)
    b = step_linear(LinearState(0.0, m0), ref_model, 0.05, 0.3, grid, 1e-3, use_liouville=True)
    assert np.abs(a.values - b.values).max() < 1e-4 * a.values.max()


def test_step_linear_preserves_transformed_flag(ref_model):
    grid = build_grid(6.0, 257)
    st_ = liouville_forward(LinearState(0.0, default_initial_density(grid, 0.0, 0.1)), 0.3, 0.05, grid)
    assert step_linear(st_, ref_model, 0.05, 0.3, grid, 1e-3).transformed


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), c=st.floats(-2.0, 2.0), sigma=st.floats(1e-3, 0.2))
def test_positivity_is_preserved(ref_model, seed, c, sigma):
    grid = build_grid(4.0, 129)
    rng = np.random.default_rng(seed)
    dens = rng.uniform(0, 1, 129)
    dens[0] = dens[-1] = 0.0
    state = PdeState.from_density(grid, 0.0, dens)
    for _ in range(5):
        state = step_nonlocal(state, ref_model, sigma, c, grid, 1.0 / 64)
    assert (state.density >= 0).all()
    assert state.mass_rho > 0


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), bump=st.floats(0.0, 1.0))
def test_linear_comparison_principle(ref_model, seed, bump):
    grid = build_grid(4.0, 129)
    rng = np.random.default_rng(seed)
    lo = rng.uniform(0, 1, 129)
    hi = lo + bump * rng.uniform(0, 1, 129)
    lo[[0, -1]] = hi[[0, -1]] = 0.0
    a = evolve_linear(lo, ref_model, 0.05, 0.5, grid, 64, 1)[-1]
    b = evolve_linear(hi, ref_model, 0.05, 0.5, grid, 64, 1)[-1]
    assert (b - a >= -1e-13 * max(1.0, b.max())).all()


def test_domain_monotonicity(ref_model):
    # Dirichlet data on a larger box can only grow the linear solution
    small, large = build_grid(3.0, 601), build_grid(6.0, 1201)
    m_small = default_initial_density(small, 0.0, 0.1)
    m_large = np.interp(large.nodes, small.nodes, m_small)
    out_s = evolve_linear(m_small, ref_model, 0.05, 0.3, small, 128, 2)[-1]
    out_l = evolve_linear(m_large, ref_model, 0.05, 0.3, large, 128, 2)[-1]
    inside = np.abs(large.nodes) <= 3.0
    assert (out_l[inside] >= out_s - 1e-14).all()


def test_extinction_verdict():
    grid = build_grid(3.0, 129)
    n0 = PdeState.from_density(grid, 0.0, default_initial_density(grid, 0.0, 0.1))
    model = time_constant_model(lambda x: -1.0 - x ** 2)
    traj = simulate(n0, model, 0.05, 0.0, grid, SolverConfig(steps_per_period=64, max_periods=100))
    assert traj.verdict == "Extinct"
    assert traj.final_state.mass_rho < 1e-8


def test_periodic_cycle_is_recorded(ref_model):
    grid = build_grid(6.0, 513)
    n0 = PdeState.from_density(grid, 0.0, default_initial_density(grid, 0.0, 0.1))
    traj = simulate(n0, ref_model, 0.005, 0.0, grid, SolverConfig(steps_per_period=128, max_periods=300, cycle_stride=4))
    assert traj.verdict == "Periodic"
    assert traj.cycle.shape == (33, 513)
    rho = traj.cycle_rho(grid)
    assert rho[-1] == pytest.approx(rho[0], rel=1e-5)
    assert np.isclose(integrate(grid, traj.cycle[0]), traj.final_state.mass_rho)


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(steps_per_period=63)
    with pytest.raises(ValueError):
        SolverConfig(steps_per_period=65)
    with pytest.raises(ValueError):
        SolverConfig(max_periods=0)
    with pytest.raises(ValueError):
        SolverConfig(steps_per_period=128, cycle_stride=3)
