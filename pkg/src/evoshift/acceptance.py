"""Built-in acceptance suite.

Each criterion runs at its stated tolerance and returns a
:class:`CriterionResult`; nothing is retried or loosened on failure.
``evoshift check`` prints the table produced by :func:`format_table`.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import asymptotics as asy
from .discretization import build_grid
from .floquet import critical_speed_from_lambda, periodic_quantities, principal_eigenpair
from .model import QuadraticRateParams, averaged_rate, quadratic_model, simpson_weights, time_constant_model
from .pde import PdeState, Propagator, SolverConfig, default_initial_density, simulate

R_DEFAULT = 6.0
N_DEFAULT = 2049
SPP_DEFAULT = 512


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    measured: dict = field(default_factory=dict)
    seconds: float = 0.0


def _ones(t):
    return np.ones_like(np.asarray(t, dtype=float))


def _zeros(t):
    return np.zeros_like(np.asarray(t, dtype=float))


def _sin(t):
    return np.sin(2.0 * np.pi * np.asarray(t, dtype=float))


def _concave_g(t):
    e = _sin(t)
    return 1.0 - 0.5 * e * e


@lru_cache(maxsize=None)
def grid():
    return build_grid(R_DEFAULT, N_DEFAULT)


@lru_cache(maxsize=None)
def reference_params() -> QuadraticRateParams:
    """``a = 2 - (x - sin(2 pi t))**2``."""
    return QuadraticRateParams(r=2.0, g=_ones, theta=_sin)


@lru_cache(maxsize=None)
def reference_model():
    return quadratic_model(reference_params())


def _eig(model, sigma, c_tilde, **kw):
    return principal_eigenpair(model, sigma, c_tilde, grid(), SPP_DEFAULT, **kw)


@lru_cache(maxsize=None)
def _periodic_run(eps, c, max_periods=400):
    model = reference_model()
    params = reference_params()
    g = grid()
    x_bar = params.x_m - 0.5 * c / np.sqrt(params.gbar)
    n0 = PdeState.from_density(g, 0.0, default_initial_density(g, x_bar, eps))
    return simulate(n0, model, eps ** 2, c * eps, g, SolverConfig(max_periods=max_periods))


def criterion_1():
    model = time_constant_model(lambda x: 1.0 - x ** 2, profile_dx=lambda x: -2.0 * x,
                                profile_dxx=lambda x: -2.0 + 0.0 * x)
    start = time.perf_counter()
    eig = _eig(model, 0.01, 0.0)
    secs = time.perf_counter() - start
    err = abs(eig.lam + 0.9)
    ok = err <= 2e-3 and secs < 10.0
    return ok, f"lambda={eig.lam:.8f} |err|={err:.2e} (tol 2e-3), {secs:.2f}s (< 10s)", \
        {"lambda": eig.lam, "error": err, "seconds": secs}


def criterion_2():
    model = reference_model()
    sigma = 0.01
    out = {}
    ok = True
    parts = []
    start = time.perf_counter()
    base = {False: _eig(model, sigma, 0.0, use_liouville=False), None: _eig(model, sigma, 0.0)}
    for ct in (0.1, 0.2):
        for path, label in ((False, "direct"), (None, "auto")):
            lam = _eig(model, sigma, ct, use_liouville=path).lam
            gap = abs(lam - base[path].lam - ct ** 2 / (4 * sigma))
            out[f"{label}_c{ct}"] = gap
            ok &= gap <= 1e-3
            parts.append(f"{label} c~={ct}: {gap:.2e}")
    secs = time.perf_counter() - start
    ok &= secs < 60.0
    out["seconds"] = secs
    return ok, "; ".join(parts) + f" (tol 1e-3), {secs:.1f}s", out


def criterion_3():
    model = reference_model()
    g = grid()
    sigma, ct = 0.01, 0.1
    start = time.perf_counter()
    n0 = PdeState.from_density(g, 0.0, default_initial_density(g, 0.0, np.sqrt(sigma)))
    traj = simulate(n0, model, sigma, ct, g, SolverConfig(max_periods=100))
    pq = periodic_quantities(_eig(model, sigma, ct), model, g)
    mask = traj.times >= traj.times[-1] - model.period_T - 1e-12
    rho_hat = pq.rho_hat(traj.times[mask])
    gap = float(np.abs(traj.rho[mask] - rho_hat).max())
    rel = gap / float(rho_hat.max())
    secs = time.perf_counter() - start
    ok = rel <= 1e-2 and secs < 120.0
    return ok, f"{traj.verdict} after {traj.periods_run} periods; max|rho-rho_hat|/max rho_hat={rel:.2e} " \
               f"(tol 1e-2), {secs:.1f}s", {"relative_gap": rel, "periods": traj.periods_run, "seconds": secs}


def criterion_4():
    model = reference_model()
    g = grid()
    sigma = 0.01
    eig0 = _eig(model, sigma, 0.0)
    cstar = critical_speed_from_lambda(eig0.lam, sigma)
    ct = 1.05 * cstar
    n0 = PdeState.from_density(g, 0.0, default_initial_density(g, 0.0, np.sqrt(sigma)))
    traj = simulate(n0, model, sigma, ct, g, SolverConfig(max_periods=200))
    boundary = np.array([s.mass_rho for s in traj.period_states])
    tail = boundary[len(boundary) // 2:]
    monotone = bool(np.all(np.diff(tail) < 0.0))
    ok = traj.verdict == "Extinct" and monotone
    return ok, f"c~*={cstar:.6f}, c~={ct:.6f}: {traj.verdict} after {traj.periods_run} periods; " \
               f"period-boundary rho decreasing over last half: {monotone}", \
        {"c_tilde_star": cstar, "verdict": traj.verdict, "periods": traj.periods_run, "monotone": monotone}


def _moment_runs():
    params = reference_params()
    avg = averaged_rate(reference_model())
    x_bar = asy.solve_xbar(avg, 1.0)
    out = {}
    for eps in (0.2, 0.1, 0.05):
        traj = _periodic_run(eps, 1.0)
        mu, var = asy.density_moments(grid(), traj.cycle)
        out[eps] = (traj, mu, var)
    return params, avg, x_bar, out


def criterion_5():
    params, avg, x_bar, runs = _moment_runs()
    gaps = {}
    for eps, (traj, mu, _) in runs.items():
        w = simpson_weights(mu.size - 1, 1.0)
        gaps[eps] = abs(float(w @ mu) - x_bar)
    decreasing = gaps[0.05] < gaps[0.1] < gaps[0.2]
    bound = 0.3 * 0.05 / np.sqrt(params.gbar) + 0.05
    ok = decreasing and gaps[0.05] <= bound
    txt = ", ".join(f"eps={e}: {v:.2e}" for e, v in gaps.items())
    return ok, f"|<mu>-xbar| {txt}; strictly decreasing: {decreasing}; bound at 0.05: {bound:.3f}", \
        {f"gap_{e}": v for e, v in gaps.items()} | {"decreasing": decreasing}


def criterion_6():
    avg = averaged_rate(reference_model())
    lam2 = np.sqrt(-avg.abar_dxx_at_xm / 2.0)
    res = {}
    for eps in (0.1, 0.05):
        lam = _eig(reference_model(), eps ** 2, eps).lam
        res[eps] = abs(-lam - (avg.abar_max - 0.25 - eps * lam2)) / eps
    ok = res[0.05] <= 0.5 * res[0.1] + 1e-3
    return ok, f"residual/eps: 0.1 -> {res[0.1]:.3e}, 0.05 -> {res[0.05]:.3e} " \
               f"(need <= {0.5 * res[0.1] + 1e-3:.3e})", {"r_0.1": res[0.1], "r_0.05": res[0.05]}


def criterion_7():
    eps = 0.1
    traj = _periodic_run(eps, 1.0)
    rho = traj.cycle_rho(grid())
    rho_bar = float(simpson_weights(rho.size - 1, 1.0) @ rho)
    lam = _eig(reference_model(), eps ** 2, eps).lam
    rel = abs(rho_bar + lam) / abs(lam)
    ok = traj.verdict == "Periodic" and rel <= 1e-2
    return ok, f"{traj.verdict}; rho_bar={rho_bar:.8f}, -lambda={-lam:.8f}, rel={rel:.2e} (tol 1e-2)", \
        {"rho_bar": rho_bar, "lambda": lam, "relative_gap": rel}


def criterion_8():
    eps = 0.05
    params = reference_params()
    model = reference_model()
    avg = averaged_rate(model)
    x_bar = asy.solve_xbar(avg, 1.0)
    prof = asy.explicit_psi(avg, x_bar, 1.0)
    corr = asy.corrector(model, avg, prof)
    traj = _periodic_run(eps, 1.0)
    mu, var = asy.density_moments(grid(), traj.cycle)
    target_var = eps / np.sqrt(params.gbar)
    var_gap = float(np.abs(var - target_var).max())
    mean_gap = float(np.abs(mu - (x_bar + eps * corr.D(traj.cycle_times))).max())
    ok = traj.verdict == "Periodic" and var_gap <= 0.2 * target_var and mean_gap <= 0.3 * eps
    return ok, f"max|var-eps/sqrt(gbar)|={var_gap:.2e} (tol {0.2 * target_var:.2e}); " \
               f"max|mu-(xbar+eps D)|={mean_gap:.2e} (tol {0.3 * eps:.2e})", \
        {"var_gap": var_gap, "mean_gap": mean_gap}


def criterion_9():
    eps, c = 0.1, 1.0
    g = grid()
    cases = {
        "case1": (QuadraticRateParams(2.0, _ones, _sin), QuadraticRateParams(2.0, _ones, _zeros),
                  "periodic<constant"),
        "case2": (QuadraticRateParams(2.0, _concave_g, _zeros), QuadraticRateParams(2.0, _ones, _zeros),
                  "periodic>constant"),
    }
    ok = True
    parts = []
    measured = {}
    for name, (p, q, expected) in cases.items():
        cmp = asy.case_comparison(p, q, c, eps, grid=g, steps_per_period=SPP_DEFAULT)
        v = cmp.verdicts
        good = all(v[k] == expected for k in ("rho_bar", "critical_speed", "rho_bar_solver", "critical_speed_solver"))
        ok &= good
        measured[name] = v
        parts.append(f"{name}: rho {v['rho_bar']}/{v['rho_bar_solver']}, c* {v['critical_speed']}/"
                     f"{v['critical_speed_solver']} (formula/solver, expected {expected})")
    return ok, "; ".join(parts), measured


def criterion_10():
    quad = averaged_rate(reference_model())
    quartic_model = time_constant_model(
        lambda x: 1.0 - x ** 2 - 0.3 * x ** 4,
        profile_dx=lambda x: -2.0 * x - 1.2 * x ** 3,
        profile_dxx=lambda x: -2.0 - 3.6 * x ** 2,
        profile_dxxx=lambda x: -7.2 * x,
    )
    quartic = averaged_rate(quartic_model)
    worst = {}
    for name, avg in (("quadratic", quad), ("quartic", quartic)):
        prof = asy.explicit_psi(avg, asy.solve_xbar(avg, 1.0), 1.0)
        x = np.linspace(avg.x_m - 3.0, avg.x_m + 3.0, 20001)
        x = x[np.abs(x - avg.x_m) > 1e-3]
        worst[name] = float(np.abs(prof.hj_residual(x)).max())
    ok = all(v <= 1e-8 for v in worst.values())
    return ok, ", ".join(f"{k}: {v:.2e}" for k, v in worst.items()) + " (tol 1e-8)", worst


def _manufactured_error(n_points, steps, r=0.5, sigma=0.05, c_tilde=0.3, t0=0.25, R=4.0):
    def exact(x, t):
        s = 4.0 * sigma * (t + t0)
        return np.exp(r * t) / np.sqrt(np.pi * s) * np.exp(-(x + c_tilde * t) ** 2 / s)

    model = time_constant_model(lambda x: r + 0.0 * x)
    g = build_grid(R, n_points)
    prop = Propagator(model, sigma, c_tilde, g, steps)
    u = exact(g.nodes, 0.0)
    u[0] = u[-1] = 0.0
    prop.sweep_linear(u, 0, steps)
    return float(np.abs(u - exact(g.nodes, 1.0)).max())


def criterion_11():
    space = [_manufactured_error(n, 40000) for n in (129, 257, 513)]
    timing = [_manufactured_error(4097, s) for s in (32, 64, 128)]
    rs = [space[i] / space[i + 1] for i in range(2)]
    rt = [timing[i] / timing[i + 1] for i in range(2)]
    ok = min(rs) >= 3.5 and min(rt) >= 1.8
    return ok, "dx halving ratios " + ", ".join(f"{v:.2f}" for v in rs) + " (>= 3.5); dt halving ratios " \
        + ", ".join(f"{v:.2f}" for v in rt) + " (>= 1.8)", {"space_ratios": rs, "time_ratios": rt}


CRITERIA = {
    1: ("harmonic-oscillator eigenvalue", criterion_1),
    2: ("drift shift identity", criterion_2),
    3: ("periodic population size", criterion_3),
    4: ("extinction above critical speed", criterion_4),
    5: ("concentration of the mean", criterion_5),
    6: ("first-order size expansion", criterion_6),
    7: ("mean size equals minus eigenvalue", criterion_7),
    8: ("variance and mean oscillation", criterion_8),
    9: ("fluctuation case orderings", criterion_9),
    10: ("explicit profile residual", criterion_10),
    11: ("discretization order", criterion_11),
}


def run_criterion(number: int) -> CriterionResult:
    name, fn = CRITERIA[number]
    start = time.perf_counter()
    try:
        passed, detail, measured = fn()
    except Exception as exc:  # a crash is a failure, reported as such
        passed, detail, measured = False, f"error: {type(exc).__name__}: {exc}", {}
    return CriterionResult(number, name, bool(passed), detail, measured, time.perf_counter() - start)


def run_acceptance(numbers=None, jobs: int = 1) -> list:
    numbers = sorted(numbers or CRITERIA)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run_criterion, numbers))
    return [run_criterion(n) for n in numbers]


def format_line(res: CriterionResult) -> str:
    return f"[{'PASS' if res.passed else 'FAIL'}] {res.number:>2}. {res.name}: {res.detail} ({res.seconds:.1f}s)"


def format_table(results) -> str:
    lines = [format_line(r) for r in results]
    passed = sum(r.passed for r in results)
    lines.append(f"{passed}/{len(results)} criteria passed")
    return "\n".join(lines)
