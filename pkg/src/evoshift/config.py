"""TOML run configuration: parsing, validation, defaults and echo.

Grammar (all tables optional except ``[model]``)::

    [model]
    kind = "quadratic"          # quadratic | tabulated | expression
    period = 1.0
    r = 2.0                     # quadratic
    g = "1"                     # quadratic: expression in t
    theta = "sin(2*pi*t)"       # quadratic: expression in t
    rate = "2 - (x - sin(2*pi*t))**2"   # expression kind: expression in t and x
    t = [...]; x = [...]; values = [[...], ...]   # tabulated, values[i][j] = a(t_i, x_j)

    [grid]
    R = 6.0
    n_points = 2049

    [solver]
    steps_per_period = 512
    max_periods = 200
    extinction_threshold = 1e-8
    periodic_tolerance = 1e-6
    eigen_tol = 1e-10
    eigen_max_iters = 5000
    liouville = "auto"          # auto | on | off (eigen solves); simulations use direct advection

    [scenario]
    mode = "eigen"              # simulate | eigen | critical-speed | hj-profile |
                                # expansion-sweep | moments | case-compare
    epsilon = [0.1]             # sigma = eps**2, c_tilde = c * eps
    c = [1.0]
    speed_factor = 0.0          # simulate only: if > 0, c_tilde = factor * critical c_tilde
    initial_center = "xm"       # number, or "xm" / "xbar"
    perturbation = 0.0          # relative amplitude of seeded noise on the initial density
    seed = 0

    [scenario.constant]         # case-compare: overrides applied to [model]
    theta = "0"

    [output]
    dir = "runs/default"

Expressions use ``t``, ``x``, ``pi``, ``e`` and the functions ``sin cos tan
exp log sqrt abs tanh sinh cosh``, with the usual arithmetic operators.
"""
from __future__ import annotations

import ast
import re
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import IoError, ParseError, ValidationError

MODES = ("simulate", "eigen", "critical-speed", "hj-profile", "expansion-sweep", "moments", "case-compare")
MODEL_KINDS = ("quadratic", "tabulated", "expression")

_FUNCS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log,
    "sqrt": np.sqrt, "abs": np.abs, "tanh": np.tanh, "sinh": np.sinh, "cosh": np.cosh,
}
_CONSTS = {"pi": np.pi, "e": np.e}
_ALLOWED = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd, ast.Mod,
)


def compile_expression(text: str, variables=("t",), where: str = "expression"):
    """Turn an arithmetic expression into a numpy-vectorized function of ``variables``."""
    try:
        tree = ast.parse(str(text), mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"{where}: cannot parse {text!r} ({exc.msg})") from None
    names = set(variables) | set(_FUNCS) | set(_CONSTS)
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED):
            raise ValueError(f"{where}: {type(node).__name__} is not allowed in {text!r}")
        if isinstance(node, ast.Name) and node.id not in names:
            raise ValueError(f"{where}: unknown name {node.id!r} in {text!r}")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS):
            raise ValueError(f"{where}: only {sorted(_FUNCS)} may be called")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ValueError(f"{where}: non-numeric literal in {text!r}")
    code = compile(tree, "<expr>", "eval")
    env = {"__builtins__": {}, **_FUNCS, **_CONSTS}

    def fn(*args):
        arrays = [np.asarray(a, dtype=float) for a in args]
        scope = dict(zip(variables, arrays))
        out = eval(code, env, scope)  # noqa: S307 - AST whitelisted above
        shape = np.broadcast_shapes(*(a.shape for a in arrays))
        return np.broadcast_to(np.asarray(out, dtype=float), shape).copy()

    fn.__name__ = f"expr_{'_'.join(variables)}"
    fn.source = str(text)
    return fn


DEFAULTS = {
    "grid": {"R": 6.0, "n_points": 2049},
    "solver": {
        "steps_per_period": 512, "max_periods": 200, "extinction_threshold": 1e-8,
        "periodic_tolerance": 1e-6, "eigen_tol": 1e-10, "eigen_max_iters": 5000, "liouville": "auto",
    },
    "scenario": {
        "mode": "eigen", "epsilon": [0.1], "c": [1.0], "speed_factor": 0.0,
        "initial_center": "xm", "perturbation": 0.0, "seed": 0,
    },
    "output": {"dir": "runs/default"},
}


@dataclass(frozen=True)
class GridSpec:
    R: float
    n_points: int


@dataclass(frozen=True)
class SolverSpec:
    steps_per_period: int
    max_periods: int
    extinction_threshold: float
    periodic_tolerance: float
    eigen_tol: float
    eigen_max_iters: int
    liouville: str


@dataclass(frozen=True)
class ScenarioSpec:
    mode: str
    epsilon: tuple
    c: tuple
    speed_factor: float
    initial_center: Any
    perturbation: float
    seed: int
    constant: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ScenarioInstance:
    index: int
    mode: str
    epsilon: float
    c: float

    @property
    def sigma(self) -> float:
        return self.epsilon ** 2

    @property
    def c_tilde(self) -> float:
        return self.c * self.epsilon

    @property
    def label(self) -> str:
        return f"s{self.index:02d}_{self.mode}_eps{self.epsilon:g}_c{self.c:g}"


@dataclass(frozen=True)
class RunConfig:
    model: dict
    grid: GridSpec
    solver: SolverSpec
    scenario: ScenarioSpec
    output_dir: str
    source: Optional[str] = field(default=None, compare=False)

    def scenarios(self) -> list:
        """One instance per (epsilon, c) pair, epsilon-major."""
        sc = self.scenario
        out = []
        for eps in sc.epsilon:
            for c in sc.c:
                out.append(ScenarioInstance(len(out), sc.mode, float(eps), float(c)))
        return out

    def with_mode(self, mode: str) -> "RunConfig":
        raw = self.to_dict()
        raw["scenario"]["mode"] = mode
        return validate(raw, self.source)

    def to_dict(self) -> dict:
        scenario = asdict(self.scenario)
        scenario["epsilon"] = list(scenario["epsilon"])
        scenario["c"] = list(scenario["c"])
        if not scenario["constant"]:
            del scenario["constant"]
        return {
            "model": _plain(self.model),
            "grid": asdict(self.grid),
            "solver": asdict(self.solver),
            "scenario": scenario,
            "output": {"dir": self.output_dir},
        }

    def echo(self) -> str:
        return tomli_w.dumps(self.to_dict())


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _line_of(message: str):
    m = re.search(r"line (\d+)", message)
    return int(m.group(1)) if m else None


def parse_config_text(text: str, source: Optional[str] = None) -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        msg = str(exc)
        raise ParseError(msg, line=_line_of(msg)) from None
    return validate(raw, source)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read config: {exc.strerror}", path=str(path)) from None
    return parse_config_text(text, source=str(path))


def _number(problems, table, key, value, *, integer=False, positive=True, allow_zero=False):
    ok_type = isinstance(value, int) if integer else isinstance(value, (int, float))
    if isinstance(value, bool) or not ok_type:
        problems.append(f"{table}.{key}: expected {'an integer' if integer else 'a number'}, got {value!r}")
        return value
    if positive and (value < 0 or (value == 0 and not allow_zero)):
        problems.append(f"{table}.{key}: must be {'non-negative' if allow_zero else 'positive'}, got {value!r}")
    return int(value) if integer else float(value)


def _check_model(problems, model: dict, table="model"):
    kind = model.get("kind")
    if kind not in MODEL_KINDS:
        problems.append(f"{table}.kind: expected one of {', '.join(MODEL_KINDS)}, got {kind!r}")
        return
    model.setdefault("period", 1.0)
    _number(problems, table, "period", model["period"])
    if kind == "quadratic":
        if "r" not in model:
            problems.append(f"{table}.r: required for quadratic models")
        else:
            _number(problems, table, "r", model["r"], positive=False)
        for key in ("g", "theta"):
            if key not in model:
                problems.append(f"{table}.{key}: required for quadratic models")
                continue
            if isinstance(model[key], (int, float)) and not isinstance(model[key], bool):
                model[key] = repr(float(model[key]))
            try:
                compile_expression(model[key], ("t",), f"{table}.{key}")
            except ValueError as exc:
                problems.append(str(exc))
    elif kind == "expression":
        if "rate" not in model:
            problems.append(f"{table}.rate: required for expression models")
        else:
            try:
                compile_expression(model["rate"], ("t", "x"), f"{table}.rate")
            except ValueError as exc:
                problems.append(str(exc))
    else:
        missing = [k for k in ("t", "x", "values") if k not in model]
        for k in missing:
            problems.append(f"{table}.{k}: required for tabulated models")
        if not missing:
            try:
                tn = np.asarray(model["t"], dtype=float)
                xn = np.asarray(model["x"], dtype=float)
                vals = np.asarray(model["values"], dtype=float)
            except (TypeError, ValueError):
                problems.append(f"{table}.values: t, x and values must be numeric arrays")
                return
            if tn.ndim != 1 or xn.ndim != 1 or vals.shape != (tn.size, xn.size):
                problems.append(f"{table}.values: shape {vals.shape} does not match (len(t), len(x)) = "
                                f"({tn.size}, {xn.size})")
            elif tn.size < 2 or xn.size < 2 or np.any(np.diff(tn) <= 0) or np.any(np.diff(xn) <= 0):
                problems.append(f"{table}.t/x: need at least two strictly increasing nodes")


def validate(raw: dict, source: Optional[str] = None) -> RunConfig:
    """Fill defaults and check every constraint, reporting all violations together."""
    problems = []
    known = {"model", "grid", "solver", "scenario", "output"}
    for key in raw:
        if key not in known:
            problems.append(f"{key}: unknown table")
    model = dict(raw.get("model", {}))
    if "model" not in raw:
        problems.append("model: table is required")
    else:
        _check_model(problems, model)

    sections = {}
    for name in ("grid", "solver", "scenario", "output"):
        given = dict(raw.get(name, {}))
        for key in given:
            if key not in DEFAULTS[name] and not (name == "scenario" and key == "constant"):
                problems.append(f"{name}.{key}: unknown field")
        sections[name] = {**DEFAULTS[name], **given}

    g = sections["grid"]
    R = _number(problems, "grid", "R", g["R"])
    n_points = _number(problems, "grid", "n_points", g["n_points"], integer=True)
    if isinstance(n_points, int) and not isinstance(n_points, bool) and n_points < 64:
        problems.append(f"grid.n_points: must be >= 64, got {n_points}")

    s = sections["solver"]
    spp = _number(problems, "solver", "steps_per_period", s["steps_per_period"], integer=True)
    if isinstance(spp, int) and (spp < 64 or spp % 2):
        problems.append(f"solver.steps_per_period: must be an even integer >= 64, got {spp}")
    solver_vals = {
        "steps_per_period": spp,
        "max_periods": _number(problems, "solver", "max_periods", s["max_periods"], integer=True),
        "extinction_threshold": _number(problems, "solver", "extinction_threshold", s["extinction_threshold"]),
        "periodic_tolerance": _number(problems, "solver", "periodic_tolerance", s["periodic_tolerance"]),
        "eigen_tol": _number(problems, "solver", "eigen_tol", s["eigen_tol"]),
        "eigen_max_iters": _number(problems, "solver", "eigen_max_iters", s["eigen_max_iters"], integer=True),
        "liouville": s["liouville"],
    }
    if s["liouville"] not in ("auto", "on", "off"):
        problems.append(f"solver.liouville: expected auto, on or off, got {s['liouville']!r}")

    sc = sections["scenario"]
    mode = sc["mode"]
    if mode not in MODES:
        problems.append(f"scenario.mode: {mode!r} is not one of {', '.join(MODES)}")
    lists = {}
    for key, allow_zero in (("epsilon", False), ("c", True)):
        vals = sc[key]
        if not isinstance(vals, list):
            vals = [vals]
        if not vals:
            problems.append(f"scenario.{key}: must not be empty")
        lists[key] = tuple(_number(problems, "scenario", key, v, allow_zero=allow_zero) for v in vals)
    speed_factor = _number(problems, "scenario", "speed_factor", sc["speed_factor"], allow_zero=True)
    perturbation = _number(problems, "scenario", "perturbation", sc["perturbation"], allow_zero=True)
    seed = _number(problems, "scenario", "seed", sc["seed"], integer=True, allow_zero=True)
    center = sc["initial_center"]
    if isinstance(center, bool) or not (isinstance(center, (int, float)) or center in ("xbar", "xm")):
        problems.append(f"scenario.initial_center: expected a number, 'xbar' or 'xm', got {center!r}")
    elif isinstance(center, int):
        center = float(center)
    constant = dict(sc.get("constant", {}))
    if mode == "case-compare":
        if model.get("kind") != "quadratic":
            problems.append("model.kind: case-compare needs a quadratic model")
        elif not constant:
            problems.append("scenario.constant: case-compare needs overrides for the constant environment")
        else:
            _check_model(problems, {**model, **constant}, "scenario.constant")
    if mode == "expansion-sweep" and len(lists["epsilon"]) < 2:
        problems.append("scenario.epsilon: expansion-sweep needs at least two values")

    out_dir = sections["output"]["dir"]
    if not isinstance(out_dir, str) or not out_dir:
        problems.append(f"output.dir: expected a non-empty string, got {out_dir!r}")

    if problems:
        raise ValidationError(problems)
    return RunConfig(
        model=model,
        grid=GridSpec(R=R, n_points=n_points),
        solver=SolverSpec(**solver_vals),
        scenario=ScenarioSpec(mode=mode, epsilon=lists["epsilon"], c=lists["c"],
                              speed_factor=speed_factor, initial_center=center,
                              perturbation=perturbation, seed=seed, constant=constant),
        output_dir=out_dir,
        source=source,
    )


def build_model(spec: dict):
    """Instantiate the growth-rate model described by a validated ``[model]`` table.

    Returns ``(model, quadratic_params_or_None)``.
    """
    from .model import GrowthRateModel, QuadraticRateParams, quadratic_model, tabulated_model

    kind = spec["kind"]
    T = float(spec.get("period", 1.0))
    if kind == "quadratic":
        params = QuadraticRateParams(
            r=float(spec["r"]),
            g=compile_expression(spec["g"], ("t",), "model.g"),
            theta=compile_expression(spec["theta"], ("t",), "model.theta"),
            period_T=T,
        )
        return quadratic_model(params), params
    if kind == "expression":
        rate = compile_expression(spec["rate"], ("t", "x"), "model.rate")
        return GrowthRateModel(period_T=T, rate=rate, name="expression"), None
    return tabulated_model(spec["t"], spec["x"], spec["values"], T), None
