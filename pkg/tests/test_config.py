import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evoshift.config import (
    DEFAULTS,
    build_model,
    compile_expression,
    load_config,
    parse_config_text,
)
from evoshift.errors import IoError, ParseError, ValidationError
from evoshift.model import QuadraticRateParams

MINIMAL = """
[model]
kind = "quadratic"
r = 2.0
g = "1"
theta = "sin(2*pi*t)"
"""


def test_defaults_filled():
    cfg = parse_config_text(MINIMAL)
    assert cfg.grid.R == 6.0 and cfg.grid.n_points == 2049
    assert cfg.solver.steps_per_period == 512
    assert cfg.scenario.mode == "eigen"
    assert cfg.scenario.initial_center == "xm"
    assert [s.label for s in cfg.scenarios()] == ["s00_eigen_eps0.1_c1"]


def test_round_trip_through_echo():
    text = MINIMAL + '[scenario]\nmode = "simulate"\nepsilon = [0.2, 0.1]\nc = [0.0, 1.0]\nseed = 3\n'
    cfg = parse_config_text(text)
    again = parse_config_text(cfg.echo())
    assert again == cfg
    assert again.echo() == cfg.echo()


def test_scenarios_are_epsilon_major():
    cfg = parse_config_text(MINIMAL + "[scenario]\nepsilon = [0.2, 0.1]\nc = [0.5, 1.0]\n")
    inst = cfg.scenarios()
    assert [(i.epsilon, i.c) for i in inst] == [(0.2, 0.5), (0.2, 1.0), (0.1, 0.5), (0.1, 1.0)]
    assert inst[3].sigma == pytest.approx(0.01)
    assert inst[3].c_tilde == pytest.approx(0.1)


def test_missing_r_is_reported():
    text = MINIMAL.replace("r = 2.0\n", "")
    with pytest.raises(ValidationError) as exc:
        parse_config_text(text)
    assert any("r" in p for p in exc.value.problems)


def test_all_problems_collected():
    text = MINIMAL + "[grid]\nn_points = 10\nfoo = 1\n[solver]\nsteps_per_period = 63\nliouville = \"maybe\"\n"
    with pytest.raises(ValidationError) as exc:
        parse_config_text(text)
    probs = exc.value.problems
    assert len(probs) >= 4
    assert any("grid.foo" in p for p in probs)


def test_parse_error_carries_line():
    text = '[model]\nkind = "quadratic"\nr = = 2\n'
    with pytest.raises(ParseError) as exc:
        parse_config_text(text)
    assert exc.value.line == 3


def test_missing_file(tmp_path):
    with pytest.raises(IoError):
        load_config(tmp_path / "nope.toml")


def test_case_compare_requires_constant():
    with pytest.raises(ValidationError):
        parse_config_text(MINIMAL + '[scenario]\nmode = "case-compare"\n')
    cfg = parse_config_text(MINIMAL + '[scenario]\nmode = "case-compare"\n[scenario.constant]\ntheta = "0"\n')
    assert cfg.scenario.constant == {"theta": "0"}


def test_expansion_sweep_needs_two_eps():
    with pytest.raises(ValidationError):
        parse_config_text(MINIMAL + '[scenario]\nmode = "expansion-sweep"\nepsilon = [0.1]\n')


def test_with_mode_revalidates():
    cfg = parse_config_text(MINIMAL)
    assert cfg.with_mode("simulate").scenario.mode == "simulate"
    with pytest.raises(ValidationError):
        cfg.with_mode("expansion-sweep")


def test_build_quadratic_model():
    model, params = build_model(parse_config_text(MINIMAL).model)
    assert isinstance(params, QuadraticRateParams)
    assert model(0.25, 0.0) == pytest.approx(2.0 - 1.0)


def test_build_tabulated_model():
    text = """
[model]
kind = "tabulated"
t = [0.0, 0.5]
x = [-1.0, 0.0, 1.0]
values = [[0.0, 1.0, 0.0], [0.0, 2.0, 0.0]]
"""
    model, params = build_model(parse_config_text(text).model)
    assert params is None
    assert model(0.25, 0.0) == pytest.approx(1.5)


def test_tabulated_shape_checked():
    text = '[model]\nkind = "tabulated"\nt = [0.0, 0.5]\nx = [-1.0, 1.0]\nvalues = [[1.0, 2.0, 3.0]]\n'
    with pytest.raises(ValidationError):
        parse_config_text(text)


def test_expression_safety():
    f = compile_expression("exp(-t) * sin(pi*t)")
    assert f(np.array([0.5])) == pytest.approx(np.exp(-0.5))
    assert f(0.0).shape == ()
    for bad in ("__import__('os')", "t.real", "open('x')", "'a'", "lambda: 1", "q + 1"):
        with pytest.raises(ValueError):
            compile_expression(bad)


def test_expression_broadcasts_constants():
    f = compile_expression("1", variables=("t", "x"))
    assert f(np.zeros((3, 1)), np.zeros((1, 4))).shape == (3, 4)


@settings(max_examples=50, deadline=None)
@given(a=st.floats(-10, 10), b=st.floats(0.1, 10), t=st.floats(-3, 3))
def test_expression_matches_python(a, b, t):
    f = compile_expression(f"({a!r}) * t**2 - t / ({b!r}) + cos(t)")
    assert f(t) == pytest.approx(a * t * t - t / b + np.cos(t), rel=1e-12, abs=1e-12)


def test_defaults_table():
    assert DEFAULTS["grid"] == {"R": 6.0, "n_points": 2049}
