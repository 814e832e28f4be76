import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from evoshift.discretization import build_grid, integrate
from evoshift.errors import NoConvergence, NonviablePopulation
from evoshift.floquet import (
    choose_liouville,
    critical_speed,
    critical_speed_from_lambda,
    decay_rate_bound,
    decay_tail_check,
    mean_fitness,
    monodromy_apply,
    periodic_logistic,
    periodic_logistic_samples,
    periodic_quantities,
    principal_eigenpair,
)
from evoshift.model import TailHypothesis


def harmonic_lambda(sigma, c_tilde):
    # top of sigma d2 + c d + 1 - x^2 on the line
    return -(1.0 - c_tilde ** 2 / (4 * sigma) - np.sqrt(sigma))


@pytest.fixture(scope="module")
def harmonic_eig(harmonic_model):
    return principal_eigenpair(harmonic_model, 0.01, 0.1, build_grid(6.0, 2049), steps_per_period=128)


def test_harmonic_eigenvalue(harmonic_eig):
    assert harmonic_eig.lam == pytest.approx(harmonic_lambda(0.01, 0.1), abs=2e-4)
    assert harmonic_eig.p0.max() == pytest.approx(1.0)
    assert (harmonic_eig.eigenfunction >= 0).all()
    assert harmonic_eig.periodicity_error == 0.0
    assert harmonic_eig.residual < 1e-6


def test_paths_agree(harmonic_model):
    grid = build_grid(6.0, 2049)
    a = principal_eigenpair(harmonic_model, 0.01, 0.1, grid, 128, use_liouville=True)
    b = principal_eigenpair(harmonic_model, 0.01, 0.1, grid, 128, use_liouville=False)
    assert a.liouville and not b.liouville
    assert a.lam == pytest.approx(b.lam, abs=1e-3)


def test_choose_liouville():
    grid = build_grid(6.0, 257)
    assert choose_liouville(0.1, 0.01, grid)      # k R = 30
    assert not choose_liouville(0.2, 0.01, grid)  # k R = 60


def test_monodromy_scales_by_growth_factor(harmonic_model, harmonic_eig):
    grid = harmonic_eig.grid
    out = monodromy_apply(harmonic_eig.p0, harmonic_model, 0.01, 0.1, grid, 128, use_liouville=True)
    assert np.allclose(out, np.exp(-harmonic_eig.lam) * harmonic_eig.p0, atol=1e-8)


def test_no_convergence_is_reported(harmonic_model):
    with pytest.raises(NoConvergence):
        principal_eigenpair(harmonic_model, 0.01, 0.1, build_grid(6.0, 257), 64, max_iters=2)


def test_critical_speed(harmonic_model):
    grid = build_grid(6.0, 2049)
    cs = critical_speed(harmonic_model, 0.01, grid, steps_per_period=128)
    assert cs == pytest.approx(2 * np.sqrt(0.01 * 0.9), rel=1e-3)
    assert critical_speed_from_lambda(0.5, 0.01) == 0.0


def _shooting_oracle(growth, T):
    def end(y0):
        sol = solve_ivp(lambda t, y: y * (growth(t) - y), (0, T), [y0], rtol=1e-12, atol=1e-14)
        return sol.y[0, -1] - y0
    y0 = brentq(end, 1e-3, 10.0, xtol=1e-14)
    return lambda ts: solve_ivp(lambda t, y: y * (growth(t) - y), (0, T), [y0], t_eval=ts,
                                rtol=1e-12, atol=1e-14).y[0]


def test_periodic_logistic_matches_shooting():
    growth = lambda t: 1.0 + 0.8 * np.sin(2 * np.pi * t) + 0.3 * np.cos(4 * np.pi * t)  # noqa: E731
    ts = np.linspace(0.0, 1.0, 41)
    ref = _shooting_oracle(growth, 1.0)(ts)
    assert np.abs(periodic_logistic(growth, 1.0)(ts) - ref).max() < 1e-6
    # and on the real line, by periodicity
    assert np.abs(periodic_logistic(growth, 1.0)(ts + 3.0) - ref).max() < 1e-6


def test_periodic_logistic_constant_growth():
    y = periodic_logistic_samples(np.linspace(0, 2.0, 65), np.full(65, 0.7))
    assert np.allclose(y, 0.7, rtol=1e-13)


def test_nonviable_growth():
    with pytest.raises(NonviablePopulation):
        periodic_logistic_samples(np.linspace(0, 1, 65), np.full(65, -0.1))
    with pytest.raises(ValueError):
        periodic_logistic_samples(np.linspace(0, 1, 64), np.ones(64))


def test_periodic_quantities_reference(ref_model, grid):
    eig = principal_eigenpair(ref_model, 0.01, 0.1, grid, 256)
    pq = periodic_quantities(eig, ref_model, grid)
    # time-averaged mean fitness equals -lambda up to discretization
    assert pq.Qc_mean == pytest.approx(-eig.lam, abs=5e-4)
    assert pq.rho_hat_mean == pytest.approx(pq.Qc_mean, rel=1e-8)
    assert np.allclose(integrate(grid, pq.Pc), 1.0)
    assert np.allclose(mean_fitness(eig, ref_model, grid), pq.Qc_values)
    assert pq.rho_hat(0.3) == pytest.approx(pq.rho_hat(1.3))


def test_decay_tail(harmonic_eig):
    tail = TailHypothesis(delta=0.5, R0=2.0)
    rep = decay_tail_check(harmonic_eig, tail, 0.01, 0.1)
    assert rep.nu == pytest.approx(decay_rate_bound(tail, 0.01, 0.1))
    assert rep.passed, rep
    assert rep.slope_right < -rep.nu + rep.margin
