import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evoshift.errors import NoInteriorMaximum, NonPositiveMaximum, NonPositivePressure
from evoshift.model import (
    GrowthRateModel,
    QuadraticRateParams,
    TailHypothesis,
    averaged_rate,
    central_dx,
    central_dxx,
    central_dxxx,
    check_hypotheses,
    quadratic_model,
    simpson_weights,
    tabulated_model,
    time_constant_model,
)

from conftest import ones, sin2pi, zeros


def test_simpson_is_exact_for_cubics():
    x = np.linspace(0.0, 2.0, 9)
    w = simpson_weights(8, 2.0)
    assert w @ (x ** 3 - x) == pytest.approx(4.0 - 2.0, abs=1e-14)


def test_simpson_rejects_odd_intervals():
    with pytest.raises(ValueError):
        simpson_weights(7, 1.0)


def test_reference_quadratic_averages(ref_params, ref_model):
    assert ref_params.gbar == pytest.approx(1.0, abs=1e-12)
    assert ref_params.g1 == pytest.approx(0.0, abs=1e-12)
    assert ref_params.g2 == pytest.approx(0.5, abs=1e-12)
    avg = averaged_rate(ref_model)
    assert avg.x_m == pytest.approx(0.0, abs=1e-12)
    assert avg.abar_max == pytest.approx(1.5, abs=1e-12)
    x = np.linspace(-3, 3, 13)
    assert np.allclose(avg.abar(x), 2.0 - x ** 2 - 0.5, atol=1e-12)


def test_time_constant_average_is_itself(harmonic_model):
    avg = averaged_rate(harmonic_model)
    assert avg.x_m == pytest.approx(0.0, abs=1e-9)
    assert avg.abar_max == pytest.approx(1.0)
    assert avg.abar_dxx_at_xm == pytest.approx(-2.0)


def test_constant_theta_gives_xm_theta0():
    p = QuadraticRateParams(r=1.0, g=lambda t: 1.0 + 0.5 * sin2pi(t), theta=lambda t: 0.7 + zeros(t))
    assert p.x_m == pytest.approx(0.7, abs=1e-12)
    assert averaged_rate(quadratic_model(p)).x_m == pytest.approx(0.7, abs=1e-12)


def test_trivial_quadratic_collapses():
    m = quadratic_model(QuadraticRateParams(r=1.0, g=ones, theta=zeros))
    x = np.linspace(-2, 2, 9)
    assert np.allclose(m(0.3, x), 1 - x ** 2)
    assert np.allclose(averaged_rate(m).abar(x), 1 - x ** 2)


def test_max_value_formula():
    p = QuadraticRateParams(r=1.5, g=lambda t: 2 + np.cos(2 * np.pi * np.asarray(t)), theta=lambda t: 0.3 * sin2pi(t) + 0.1)
    avg = averaged_rate(quadratic_model(p))
    assert avg.abar_max == pytest.approx(p.r + p.g1 ** 2 / p.gbar - p.g2, rel=1e-12)
    assert p.g2 >= p.g1 ** 2 / p.gbar


def test_quadratic_closed_forms_match_generic_quadrature():
    p = QuadraticRateParams(r=1.5, g=lambda t: 2 + np.cos(2 * np.pi * np.asarray(t)), theta=lambda t: 0.3 * sin2pi(t) + 0.1)
    exact = averaged_rate(quadratic_model(p))
    generic = averaged_rate(quadratic_model(p).without_closed_forms(), quadrature_points=256)
    x = np.linspace(-2, 2, 21)
    assert np.allclose(generic.abar(x), exact.abar(x), rtol=1e-8)
    assert generic.x_m == pytest.approx(exact.x_m, abs=1e-8)
    assert generic.abar_dxx_at_xm == pytest.approx(exact.abar_dxx_at_xm, rel=1e-5)


def test_nonpositive_pressure_rejected():
    with pytest.raises(NonPositivePressure):
        QuadraticRateParams(r=1.0, g=lambda t: sin2pi(t), theta=zeros)


def test_nonpositive_maximum_rejected():
    m = time_constant_model(lambda x: -1.0 - x ** 2)
    with pytest.raises(NonPositiveMaximum):
        averaged_rate(m)


def test_boundary_maximum_rejected():
    m = time_constant_model(lambda x: 1.0 + 0.1 * x)
    with pytest.raises(NoInteriorMaximum):
        averaged_rate(m, bracket=(-2.0, 2.0))


def test_double_peak_flags_non_uniqueness():
    m = time_constant_model(lambda x: 1.0 - (x ** 2 - 1.0) ** 2)
    assert not averaged_rate(m, bracket=(-3, 3)).unique_max


@settings(max_examples=30, deadline=None)
@given(t=st.floats(-5, 5), x=st.floats(-5, 5))
def test_quadratic_rate_is_periodic(ref_model, t, x):
    assert ref_model(t, x) == pytest.approx(ref_model(t + 1.0, x), abs=1e-12)


@settings(max_examples=10, deadline=None)
@given(a1=st.floats(0.5, 2.0), a2=st.floats(0.1, 1.0), s=st.floats(-1, 1))
def test_averaging_is_linear(a1, a2, s):
    f1 = lambda t, x: a1 - (x - s * np.sin(2 * np.pi * t)) ** 2  # noqa: E731
    f2 = lambda t, x: a2 * np.cos(2 * np.pi * t) ** 2 - 0.5 * x ** 2  # noqa: E731
    m1, m2 = GrowthRateModel(1.0, f1), GrowthRateModel(1.0, f2)
    ms = GrowthRateModel(1.0, lambda t, x: f1(t, x) + f2(t, x))
    x = np.linspace(-1, 1, 7)
    lhs = averaged_rate(ms).abar(x)
    rhs = averaged_rate(m1).abar(x) + averaged_rate(m2).abar(x)
    assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-12)


def test_finite_differences():
    x = np.array([-1.3, 0.0, 0.4, 2.0])
    assert np.allclose(central_dx(np.sin, x), np.cos(x), atol=1e-9)
    assert np.allclose(central_dxx(np.sin, x), -np.sin(x), atol=1e-8)
    assert np.allclose(central_dxxx(np.sin, x), -np.cos(x), atol=1e-6)


def test_tabulated_model_interpolates_and_wraps():
    t = np.array([0.0, 0.5])
    x = np.array([-1.0, 1.0])
    vals = np.array([[0.0, 2.0], [1.0, 3.0]])
    m = tabulated_model(t, x, vals, 1.0)
    assert m(0.25, 0.0) == pytest.approx(1.5)
    assert m(1.25, 0.0) == pytest.approx(1.5)
    assert m(0.75, -1.0) == pytest.approx(0.5)  # closes the cycle back to row 0
    assert m(0.0, 5.0) == pytest.approx(2.0)  # clipped in x


def test_hypotheses_pass_for_harmonic(harmonic_model):
    avg = averaged_rate(harmonic_model)
    rep = check_hypotheses(harmonic_model, avg, -0.9, TailHypothesis(delta=0.05, R0=1.5))
    assert rep.passed
    assert rep["Hc"].passed


def test_hypotheses_report_violation_with_witness():
    m = time_constant_model(lambda x: 1.0 - x ** 2 / (1 + x ** 2))
    avg = averaged_rate(m)
    rep = check_hypotheses(m, avg, -0.05, TailHypothesis(delta=0.1, R0=2.0))
    assert not rep["Hc"].passed
    assert rep["Hc"].worst is not None


def test_quadratic_satisfies_tail_condition_far_out(ref_model):
    avg = averaged_rate(ref_model)
    rep = check_hypotheses(ref_model, avg, -1.15, TailHypothesis(delta=0.1, R0=3.0), shift_penalty=0.25)
    assert rep.passed
    assert set(rep.as_dict()) == {"H1", "H2a", "H2b", "H3", "Hc"}
