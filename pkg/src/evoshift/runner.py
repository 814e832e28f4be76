"""Scenario orchestration and result files.

The runner is the only place where the small-mutation scaling is applied:
each scenario carries ``(epsilon, c)`` and the solvers receive
``sigma = epsilon**2`` and ``c_tilde = c * epsilon``.
"""
from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import asymptotics as asy
from .config import RunConfig, ScenarioInstance, build_model, compile_expression
from .discretization import build_grid
from .errors import EvoshiftError, IoError, NonviablePopulation
from .floquet import critical_speed_from_lambda, mean_fitness, periodic_quantities, principal_eigenpair
from .kernels import backend as default_backend
from .model import QuadraticRateParams, averaged_rate, simpson_weights
from .pde import PdeState, SolverConfig, default_initial_density, simulate

log = logging.getLogger(__name__)


@dataclass
class Table:
    columns: tuple
    data: np.ndarray


@dataclass
class ScenarioResult:
    label: str
    mode: str
    epsilon: float
    c: float
    status: str = "ok"
    error: Optional[str] = None
    scalars: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def as_dict(self) -> dict:
        return {
            "label": self.label, "mode": self.mode, "epsilon": self.epsilon, "c": self.c,
            "sigma": self.epsilon ** 2, "c_tilde": self.c * self.epsilon,
            "status": self.status, "error": self.error, "results": _jsonable(self.scalars),
            "seconds": self.seconds,
        }


@dataclass
class RunSummary:
    config: RunConfig
    scenarios: list
    aggregate: dict = field(default_factory=dict)
    aggregate_tables: dict = field(default_factory=dict)
    manifest: list = field(default_factory=list)
    seconds: float = 0.0
    backend: str = ""

    @property
    def ok(self) -> bool:
        return all(s.ok for s in self.scenarios)

    def as_dict(self) -> dict:
        return {
            "mode": self.config.scenario.mode,
            "backend": self.backend,
            "ok": self.ok,
            "scenarios": [s.as_dict() for s in self.scenarios],
            "aggregate": _jsonable(self.aggregate),
            "files": list(self.manifest),
            "seconds": self.seconds,
            "config": self.config.to_dict(),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


class Context:
    """Model, grid and averaged rate shared read-only by every scenario of a run."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.model, self.params = build_model(config.model)
        self.grid = build_grid(config.grid.R, config.grid.n_points)
        self._avg = None
        self._avg_error = None
        try:
            self._avg = averaged_rate(self.model, bracket=(-config.grid.R, config.grid.R))
        except EvoshiftError as exc:
            self._avg_error = exc

    @property
    def avg(self):
        if self._avg is None:
            raise self._avg_error
        return self._avg

    @property
    def has_avg(self) -> bool:
        return self._avg is not None

    def liouville(self):
        return {"auto": None, "on": True, "off": False}[self.config.solver.liouville]

    def eigen(self, sigma, c_tilde, model=None):
        s = self.config.solver
        return principal_eigenpair(model or self.model, sigma, c_tilde, self.grid, s.steps_per_period,
                                   tol=s.eigen_tol, max_iters=s.eigen_max_iters,
                                   use_liouville=self.liouville())

    def solver_config(self) -> SolverConfig:
        s = self.config.solver
        return SolverConfig(steps_per_period=s.steps_per_period, max_periods=s.max_periods,
                            extinction_threshold=s.extinction_threshold,
                            periodic_tolerance=s.periodic_tolerance)

    def initial_center(self, c: float) -> float:
        spec = self.config.scenario.initial_center
        if isinstance(spec, float):
            return spec
        if not self.has_avg:
            return 0.0
        if spec == "xm":
            return self.avg.x_m
        try:
            return asy.solve_xbar(self.avg, c)
        except EvoshiftError:
            return self.avg.x_m


TAIL_LIMIT = 1e-10


def _tail_ratio(values, label) -> float:
    """Largest value next to the Dirichlet boundary relative to the peak; warns above 1e-10."""
    v = np.asarray(values, dtype=float)
    ratio = float(max(v[1], v[-2]) / v.max()) if v.max() > 0 else 0.0
    if ratio > TAIL_LIMIT:
        log.warning("%s: boundary tail %.2e of the peak exceeds %.0e; consider a larger R", label, ratio, TAIL_LIMIT)
    return ratio


def _eigen_scalars(eig) -> dict:
    return {
        "lambda": eig.lam, "residual": eig.residual, "iterations": eig.iterations,
        "liouville": eig.liouville, "upwind": eig.upwind,
    }


def _rho_hat_or_none(eig, ctx):
    try:
        return periodic_quantities(eig, ctx.model, ctx.grid)
    except NonviablePopulation:
        return None


def run_eigen(ctx: Context, inst: ScenarioInstance, res: ScenarioResult):
    eig = ctx.eigen(inst.sigma, inst.c_tilde)
    res.scalars.update(_eigen_scalars(eig))
    res.scalars["boundary_tail"] = _tail_ratio(eig.p0, inst.label)
    res.tables["eigenfunction"] = Table(("x", "p_c_t0"), np.column_stack([ctx.grid.nodes, eig.p0]))
    pq = _rho_hat_or_none(eig, ctx)
    if pq is None:
        res.scalars["viable"] = False
        rho_hat = np.full(eig.times.size, np.nan)
        q = mean_fitness(eig, ctx.model, ctx.grid)
    else:
        res.scalars.update(viable=True, Qc_mean=pq.Qc_mean, rho_hat_mean=pq.rho_hat_mean)
        rho_hat, q = pq.rho_hat_values, pq.Qc_values
    res.tables["qc_rho_hat"] = Table(("t", "Q_c", "rho_hat"), np.column_stack([eig.times, q, rho_hat]))


def run_critical_speed(ctx: Context, inst: ScenarioInstance, res: ScenarioResult):
    eig0 = ctx.eigen(inst.sigma, 0.0)
    c_tilde_star = critical_speed_from_lambda(eig0.lam, inst.sigma)
    res.scalars.update(lambda0=eig0.lam, c_tilde_star=c_tilde_star, c_star=c_tilde_star / inst.epsilon,
                       iterations=eig0.iterations, residual=eig0.residual)
    if ctx.has_avg and ctx.avg.abar_dxx_at_xm < 0:
        pred = asy.predicted_critical_speed(ctx.avg, inst.epsilon)
        res.scalars.update(c_star_predicted=pred, c_star_gap=c_tilde_star / inst.epsilon - pred,
                           c_star_limit=2.0 * np.sqrt(ctx.avg.abar_max))


def _simulate(ctx: Context, inst: ScenarioInstance, c_tilde: float, center: float):
    sc = ctx.config.scenario
    grid = ctx.grid
    n0 = default_initial_density(grid, center, inst.epsilon)
    if sc.perturbation > 0:
        rng = np.random.default_rng(sc.seed)
        n0 = n0 * (1.0 + sc.perturbation * rng.uniform(-1.0, 1.0, grid.n_points))
        n0[0] = n0[-1] = 0.0
    state = PdeState.from_density(grid, 0.0, n0)
    return simulate(state, ctx.model, inst.sigma, c_tilde, grid, ctx.solver_config())


def _final_period_mask(traj, T):
    t_end = traj.times[-1]
    return traj.times >= t_end - T - 1e-12


def run_simulate(ctx: Context, inst: ScenarioInstance, res: ScenarioResult):
    sc = ctx.config.scenario
    c_tilde = inst.c_tilde
    c_tilde_star = None
    if sc.speed_factor > 0:
        eig0 = ctx.eigen(inst.sigma, 0.0)
        c_tilde_star = critical_speed_from_lambda(eig0.lam, inst.sigma)
        c_tilde = sc.speed_factor * c_tilde_star
        res.scalars.update(lambda0=eig0.lam, c_tilde_star=c_tilde_star)
    res.scalars["c_tilde_used"] = c_tilde
    traj = _simulate(ctx, inst, c_tilde, ctx.initial_center(c_tilde / inst.epsilon))
    T = ctx.model.period_T
    res.scalars.update(verdict=traj.verdict, periods_run=traj.periods_run, last_change=traj.last_change,
                       final_rho=float(traj.rho[-1]), **{f"pde_{k}": v for k, v in traj.diagnostics.items()})

    rho_hat = np.full(traj.times.size, np.nan)
    eig = ctx.eigen(inst.sigma, c_tilde)
    res.scalars["lambda"] = eig.lam
    pq = _rho_hat_or_none(eig, ctx) if eig.lam < 0 else None
    if pq is not None:
        rho_hat = pq.rho_hat(traj.times)
        mask = _final_period_mask(traj, T)
        gap = float(np.abs(traj.rho[mask] - rho_hat[mask]).max())
        res.scalars.update(rho_hat_gap=gap, rho_hat_gap_relative=gap / float(rho_hat[mask].max()))
    if traj.verdict == "Periodic":
        rho = traj.cycle_rho(ctx.grid)
        spp = rho.size - 1
        rho_bar = float(simpson_weights(spp, T) @ rho / T)
        res.scalars.update(rho_bar=rho_bar, rho_bar_vs_lambda=abs(rho_bar + eig.lam) / abs(eig.lam))
    res.tables["rho_timeseries"] = Table(("t", "rho", "rho_hat"), np.column_stack([traj.times, traj.rho, rho_hat]))
    final = traj.final_state
    res.scalars["boundary_tail"] = _tail_ratio(final.density, inst.label)
    res.tables["final_density"] = Table(("x", "n"), np.column_stack([ctx.grid.nodes, final.density]))
    return traj


def run_hj_profile(ctx: Context, inst: ScenarioInstance, res: ScenarioResult):
    avg = ctx.avg
    x_bar = asy.solve_xbar(avg, inst.c)
    prof = asy.explicit_psi(avg, x_bar, inst.c)
    eig = ctx.eigen(inst.sigma, inst.c_tilde)
    pq = periodic_quantities(eig, ctx.model, ctx.grid)
    density = pq.rho_hat_values[0] * pq.Pc[0]
    x = ctx.grid.nodes
    psi = prof.psi(x)
    psi_eps = asy.hopf_cole(density, inst.epsilon)
    window = np.abs(x - x_bar) <= 1.0
    res.scalars.update(
        x_m=avg.x_m, x_bar=x_bar, rho_bar=prof.rho_bar, lambda2=float(np.sqrt(-avg.abar_dxx_at_xm / 2.0)),
        psi_gap_window=float(np.abs(psi_eps - psi)[window].max()), **{"lambda": eig.lam},
    )
    res.tables["psi_profile"] = Table(("x", "psi", "psi_eps"), np.column_stack([x, psi, psi_eps]))


def run_moments(ctx: Context, inst: ScenarioInstance, res: ScenarioResult):
    avg = ctx.avg
    x_bar = asy.solve_xbar(avg, inst.c)
    prof = asy.explicit_psi(avg, x_bar, inst.c)
    corr = asy.corrector(ctx.model, avg, prof)
    taylor = asy.taylor_coefficients(prof)
    traj = _simulate(ctx, inst, inst.c_tilde, x_bar)
    res.scalars.update(verdict=traj.verdict, periods_run=traj.periods_run, x_bar=x_bar,
                       A=taylor.A, B=taylor.B, C=taylor.C, lambda2=corr.lambda2, K=corr.K)
    if traj.verdict != "Periodic":
        raise EvoshiftError(f"moments need a periodic regime; simulation ended {traj.verdict}")
    rep = asy.measure_moments(traj.cycle_times, traj.cycle, ctx.grid, inst.epsilon, corr, taylor, x_bar)
    res.scalars.update(
        mean_gap=rep.mean_gap, var_gap=rep.var_gap, mu_period_average=rep.mu_period_average,
        var_period_average=rep.var_period_average, var_predicted=rep.var_predicted,
    )
    n = rep.times.size
    res.tables["moments"] = Table(
        ("t", "D", "mu_measured", "mu_predicted", "var_measured", "var_predicted"),
        np.column_stack([rep.times, rep.D_values, rep.mu_measured, rep.mu_predicted,
                         rep.var_measured, np.full(n, rep.var_predicted)]),
    )


def run_expansion_point(ctx: Context, inst: ScenarioInstance, res: ScenarioResult):
    avg = ctx.avg
    eig = ctx.eigen(inst.sigma, inst.c_tilde)
    eig0 = ctx.eigen(inst.sigma, 0.0)
    pred_rho = asy.predicted_rho_bar(avg, inst.c, inst.epsilon)
    pred_cs = asy.predicted_critical_speed(avg, inst.epsilon)
    c_star = critical_speed_from_lambda(eig0.lam, inst.sigma) / inst.epsilon
    res.scalars.update(
        **{"lambda": eig.lam}, lambda0=eig0.lam, rho_bar_solver=-eig.lam, rho_bar_predicted=pred_rho,
        residual=abs(-eig.lam - pred_rho), residual_over_eps=abs(-eig.lam - pred_rho) / inst.epsilon,
        critical_speed_solver=c_star, critical_speed_predicted=pred_cs,
        shift_identity_gap=eig.lam - eig0.lam - inst.c_tilde ** 2 / (4 * inst.sigma),
    )


def _constant_params(ctx: Context) -> QuadraticRateParams:
    spec = {**ctx.config.model, **ctx.config.scenario.constant}
    return QuadraticRateParams(
        r=float(spec["r"]),
        g=compile_expression(spec["g"], ("t",), "scenario.constant.g"),
        theta=compile_expression(spec["theta"], ("t",), "scenario.constant.theta"),
        period_T=float(spec.get("period", 1.0)),
    )


def run_case_compare(ctx: Context, inst: ScenarioInstance, res: ScenarioResult):
    cmp = asy.case_comparison(ctx.params, _constant_params(ctx), inst.c, inst.epsilon, grid=ctx.grid,
                              eigen_solver=lambda m, s, ct: ctx.eigen(s, ct, model=m))
    res.scalars.update(cmp.as_dict())
    rows = []
    for key in ("rho_bar", "mean_trait", "critical_speed"):
        p, q = cmp.periodic, cmp.constant
        rows.append([getattr(p, key), getattr(q, key),
                     _nan(getattr(p, key + "_solver")), _nan(getattr(q, key + "_solver"))])
    res.tables["case_compare"] = Table(
        ("quantity", "periodic_formula", "constant_formula", "periodic_solver", "constant_solver"),
        np.column_stack([np.arange(3), np.array(rows, dtype=float)]),
    )
    res.scalars["quantity_codes"] = {"0": "rho_bar", "1": "mean_trait", "2": "critical_speed"}


def _nan(v):
    return np.nan if v is None else v


HANDLERS = {
    "eigen": run_eigen,
    "critical-speed": run_critical_speed,
    "simulate": run_simulate,
    "hj-profile": run_hj_profile,
    "moments": run_moments,
    "expansion-sweep": run_expansion_point,
    "case-compare": run_case_compare,
}


def run_scenario(ctx: Context, inst: ScenarioInstance) -> ScenarioResult:
    res = ScenarioResult(label=inst.label, mode=inst.mode, epsilon=inst.epsilon, c=inst.c)
    start = time.perf_counter()
    try:
        HANDLERS[inst.mode](ctx, inst, res)
    except EvoshiftError as exc:
        res.status = "failed"
        res.error = f"{type(exc).__name__}: {exc}"
        log.error("%s failed: %s", inst.label, res.error)
    res.seconds = time.perf_counter() - start
    log.info("%s finished in %.2fs (%s)", inst.label, res.seconds, res.status)
    return res


def _aggregate_expansion(results) -> tuple:
    good = sorted((r for r in results if r.ok), key=lambda r: (r.c, -r.epsilon))
    if not good:
        return {}, {}
    rows = [[r.epsilon, r.c, r.scalars["rho_bar_solver"], r.scalars["rho_bar_predicted"],
             r.scalars["residual_over_eps"], r.scalars["critical_speed_solver"],
             r.scalars["critical_speed_predicted"]] for r in good]
    checks = []
    for a, b in zip(good, good[1:]):
        if a.c == b.c and b.epsilon < a.epsilon:
            ratio = b.scalars["residual_over_eps"] / a.scalars["residual_over_eps"] if a.scalars["residual_over_eps"] else np.nan
            checks.append({"c": a.c, "epsilon_from": a.epsilon, "epsilon_to": b.epsilon,
                           "ratio": ratio,
                           "halving": b.scalars["residual_over_eps"] <= 0.5 * a.scalars["residual_over_eps"] + 1e-3})
    table = Table(("epsilon", "c", "rho_bar_solver", "rho_bar_predicted", "residual_over_eps",
                   "critical_speed_solver", "critical_speed_predicted"), np.array(rows, dtype=float))
    return {"residual_decay": checks}, {"expansion": table}


def run(config: RunConfig, jobs: int = 1) -> RunSummary:
    """Execute every scenario of ``config``; failures are recorded, not raised."""
    start = time.perf_counter()
    ctx = Context(config)
    instances = config.scenarios()
    if jobs > 1 and len(instances) > 1:
        # kernels release the GIL, so threads overlap the time stepping
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda i: run_scenario(ctx, i), instances))
    else:
        results = [run_scenario(ctx, i) for i in instances]
    summary = RunSummary(config=config, scenarios=results, backend=default_backend.name)
    if config.scenario.mode == "expansion-sweep":
        summary.aggregate, summary.aggregate_tables = _aggregate_expansion(results)
    summary.seconds = time.perf_counter() - start
    return summary


def write_csv(path: Path, table: Table):
    header = ",".join(table.columns)
    np.savetxt(path, np.atleast_2d(table.data), fmt="%.17g", delimiter=",", header=header, comments="")


def emit_results(summary: RunSummary, out_dir) -> list:
    """Write ``summary.json``, ``config.echo`` and per-scenario CSVs; return relative paths."""
    out = Path(out_dir)
    manifest = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.echo").write_text(summary.config.echo(), encoding="utf-8")
        manifest.append("config.echo")
        for res in summary.scenarios:
            if not res.tables:
                continue
            sub = out / res.label
            sub.mkdir(exist_ok=True)
            for name, table in res.tables.items():
                write_csv(sub / f"{name}.csv", table)
                manifest.append(f"{res.label}/{name}.csv")
        for name, table in summary.aggregate_tables.items():
            write_csv(out / f"{name}.csv", table)
            manifest.append(f"{name}.csv")
        manifest.append("summary.json")
        summary.manifest = manifest
        (out / "summary.json").write_text(json.dumps(summary.as_dict(), indent=2, sort_keys=True) + "\n",
                                          encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write results: {exc.strerror}", path=str(exc.filename or out)) from None
    for rel in manifest:
        if (out / rel).stat().st_size == 0:
            raise IoError("output file is empty", path=str(out / rel))
    return manifest
