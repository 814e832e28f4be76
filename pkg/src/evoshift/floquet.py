"""Principal time-periodic eigenpair of the linearized problem.

Sign convention: the eigenfunction satisfies

    p_t - c_tilde p_x - sigma p_xx - a(t, x) p = lam p,

so a solution of the linear problem grows like ``exp(-lam t)``, the period
map has dominant eigenvalue ``exp(-lam T)``, and survival means ``lam < 0``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .discretization import Grid1D, integrate
from .errors import DegenerateMode, NoConvergence, NonviablePopulation
from .model import GrowthRateModel, TailHypothesis, simpson_weights
from .pde import Propagator, liouville_exponent

log = logging.getLogger(__name__)

LIOUVILLE_DEFAULT_LIMIT = 40.0


def choose_liouville(c_tilde: float, sigma: float, grid: Grid1D,
                     limit: float = LIOUVILLE_DEFAULT_LIMIT) -> bool:
    """Drift-free form when ``|c_tilde / 2 sigma| R <= limit``, direct advection otherwise."""
    return abs(liouville_exponent(c_tilde, sigma)) * grid.R <= limit


def _propagator(model, sigma, c_tilde, grid, steps_per_period, use_liouville, backend=None):
    if use_liouville is None:
        use_liouville = choose_liouville(c_tilde, sigma, grid)
    return Propagator(model, sigma, c_tilde, grid, steps_per_period,
                      use_liouville=use_liouville, backend=backend)


def monodromy_apply(v, model: GrowthRateModel, sigma: float, c_tilde: float, grid: Grid1D,
                    steps_per_period: int = 512, use_liouville: Optional[bool] = None,
                    propagator: Optional[Propagator] = None) -> np.ndarray:
    """Solve the linear problem over exactly one period starting from ``v`` at ``t = 0``."""
    prop = propagator or _propagator(model, sigma, c_tilde, grid, steps_per_period, use_liouville)
    work = prop.to_working(v)
    prop.sweep_linear(work, 0, prop.steps_per_period)
    return prop.from_working(work)


@dataclass
class FloquetEigenpair:
    lam: float
    times: np.ndarray
    eigenfunction: np.ndarray  # (len(times), n_points); sup of row 0 is 1
    residual: float
    iterations: int
    sigma: float
    c_tilde: float
    period_T: float
    grid: Grid1D
    liouville: bool
    upwind: bool
    backend: str
    history: list = field(default_factory=list, repr=False)

    @property
    def p0(self) -> np.ndarray:
        return self.eigenfunction[0]

    @property
    def periodicity_error(self) -> float:
        return float(np.abs(self.eigenfunction[-1] - self.eigenfunction[0]).max())


def _initial_vector(model, grid, sigma):
    x = grid.nodes
    t = np.linspace(0.0, model.period_T, 33)[:-1]
    mean_rate = np.asarray(model.rate(t[:, None], x[None, :]), dtype=float)
    mean_rate = np.broadcast_to(mean_rate, (t.size, x.size)).mean(axis=0)
    center = x[int(np.argmax(mean_rate))]
    width = max(np.sqrt(np.sqrt(sigma)), 4.0 * grid.dx)
    v = np.exp(-0.5 * ((x - center) / width) ** 2)
    v[0] = v[-1] = 0.0
    return v


def principal_eigenpair(model: GrowthRateModel, sigma: float, c_tilde: float, grid: Grid1D,
                        steps_per_period: int = 512, tol: float = 1e-10, max_iters: int = 5000,
                        vector_tol: float = 1e-8, use_liouville: Optional[bool] = None,
                        v0=None, backend=None) -> FloquetEigenpair:
    """Power iteration on the period map.

    Stops when the log growth factor changes by less than ``tol`` (relative,
    floored at 1) and the sup-normalized iterate moves by less than
    ``vector_tol``. The eigenfunction is then swept over one more period and
    stored at every step, rescaled by ``exp(lam t)`` so it is periodic.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    prop = _propagator(model, sigma, c_tilde, grid, steps_per_period, use_liouville, backend)
    spp = prop.steps_per_period
    T = model.period_T

    v = _initial_vector(model, grid, sigma) if v0 is None else np.array(v0, dtype=float)
    work = prop.to_working(v)
    work /= work.max()
    prev_log = None
    history = []
    for it in range(1, max_iters + 1):
        nxt = work.copy()
        prop.sweep_linear(nxt, 0, spp)
        top = nxt.max()
        if not top > 0 or nxt.min() < -1e-12 * top:
            raise DegenerateMode(f"iterate lost positivity at iteration {it}")
        log_mu = float(np.log(top))
        nxt /= top
        dv = float(np.abs(nxt - work).max())
        history.append((log_mu, dv))
        work = nxt
        if prev_log is not None:
            if abs(log_mu - prev_log) < tol * max(1.0, abs(log_mu)) and dv < vector_tol:
                break
        prev_log = log_mu
    else:
        raise NoConvergence(f"power iteration did not converge in {max_iters} iterations "
                            f"(last change {history[-1][1]:.3g})")
    lam = -log_mu / T

    store = np.empty((spp, grid.n_points))
    sweep = work.copy()
    prop.sweep_linear(sweep, 0, spp, store)
    snaps = np.vstack([work[None, :], store])
    times = np.arange(spp + 1) * prop.dt
    snaps = prop.from_working(snaps) * np.exp(lam * times)[:, None]
    snaps /= snaps[0].max()
    residual = float(np.abs(snaps[-1] - snaps[0]).max())
    snaps[-1] = snaps[0]
    log.info("eigenpair: lam=%.10g after %d iterations (liouville=%s, residual %.2e)",
             lam, it, prop.use_liouville, residual)
    return FloquetEigenpair(
        lam=lam, times=times, eigenfunction=snaps, residual=residual, iterations=it,
        sigma=float(sigma), c_tilde=float(c_tilde), period_T=T, grid=grid,
        liouville=prop.use_liouville, upwind=prop.upwind, backend=prop.backend.name,
        history=history,
    )


def critical_speed_from_lambda(lam0: float, sigma: float) -> float:
    return 2.0 * np.sqrt(-sigma * lam0) if lam0 < 0 else 0.0


def critical_speed(model: GrowthRateModel, sigma: float, grid: Grid1D,
                   steps_per_period: int = 512, tol: float = 1e-10, max_iters: int = 5000,
                   eig0: Optional[FloquetEigenpair] = None, **kwargs) -> float:
    """``2 sqrt(-sigma lam_0)`` from the drift-free eigenvalue, or 0 if ``lam_0 >= 0``."""
    if eig0 is None:
        eig0 = principal_eigenpair(model, sigma, 0.0, grid, steps_per_period, tol, max_iters, **kwargs)
    return critical_speed_from_lambda(eig0.lam, sigma)


def _periodic_spline(times, values):
    vals = np.array(values, dtype=float)
    vals[-1] = vals[0]
    return CubicSpline(times, vals, bc_type="periodic")


def _wrap(spline, T):
    def f(t):
        return spline(np.mod(np.asarray(t, dtype=float), T))
    return f


def periodic_logistic_samples(times, growth) -> np.ndarray:
    """Periodic solution of ``y' = y (growth - y)`` at the sample times.

    ``times`` is a uniform grid over one period including both endpoints
    (even number of intervals); ``growth`` holds the samples. Uses

        y(t) = (1 - exp(-I)) / int_t^{t+T} exp(-int_s^{t+T} growth) ds,

    with ``I`` the integral of ``growth`` over a period, which is the explicit
    formula rewritten so every exponent is bounded.
    """
    times = np.asarray(times, dtype=float)
    q = np.array(growth, dtype=float)
    n = times.size - 1
    if n < 2 or n % 2:
        raise ValueError("need an even number of intervals over the period")
    T = times[-1] - times[0]
    h = T / n
    total = float(simpson_weights(n, T) @ q)
    if total <= 0.0:
        raise NonviablePopulation(f"period integral of the growth rate is {total:.6g} <= 0")
    # doubled samples covering [0, 2T]
    q2 = np.concatenate([q, q[1:]])
    # cumulative integral by the trapezoid rule with an endpoint correction
    # (Simpson-like accuracy on smooth periodic samples)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * h * (q2[1:] + q2[:-1]))])
    dq = np.gradient(q2, h)
    cum -= h * h / 12.0 * (dq - dq[0])
    w = simpson_weights(n, T)
    out = np.empty(n + 1)
    for i in range(n + 1):
        seg = cum[i:i + n + 1]
        expo = seg - seg[-1]  # -int_s^{t+T} growth
        out[i] = -np.expm1(-total) / float(w @ np.exp(expo))
    return out


def periodic_logistic(growth: Callable, T: float, n_samples: int = 2048) -> Callable:
    """Periodic solution of ``y' = y (growth(t) - y)`` as a callable on the real line."""
    times = np.linspace(0.0, T, n_samples + 1)
    g = np.broadcast_to(np.asarray(growth(times), dtype=float), times.shape)
    vals = periodic_logistic_samples(times, g)
    return _wrap(_periodic_spline(times, vals), T)


@dataclass
class PeriodicQuantities:
    times: np.ndarray
    Qc_values: np.ndarray
    Pc: np.ndarray
    rho_hat_values: np.ndarray
    Qc: Callable
    rho_hat: Callable
    Qc_mean: float

    @property
    def rho_hat_mean(self) -> float:
        T = self.times[-1] - self.times[0]
        return float(simpson_weights(self.times.size - 1, T) @ self.rho_hat_values / T)


def mean_fitness(eig: FloquetEigenpair, model: GrowthRateModel, grid: Grid1D) -> np.ndarray:
    """``Q_c`` at every stored time: the rate averaged against the eigenfunction."""
    x = grid.nodes
    p = eig.eigenfunction
    rates = np.broadcast_to(np.asarray(model.rate(eig.times[:, None], x[None, :]), dtype=float), p.shape)
    q = integrate(grid, rates * p) / integrate(grid, p)
    q[-1] = q[0]
    return q


def periodic_quantities(eig: FloquetEigenpair, model: GrowthRateModel, grid: Grid1D) -> PeriodicQuantities:
    """Mean fitness ``Q_c``, normalized profiles ``P_c`` and the periodic size ``rho_hat``."""
    times = eig.times
    p = eig.eigenfunction
    mass = integrate(grid, p)
    q = mean_fitness(eig, model, grid)
    T = eig.period_T
    q_mean = float(simpson_weights(times.size - 1, T) @ q / T)
    rho_hat = periodic_logistic_samples(times, q)
    return PeriodicQuantities(
        times=times,
        Qc_values=q,
        Pc=p / mass[:, None],
        rho_hat_values=rho_hat,
        Qc=_wrap(_periodic_spline(times, q), T),
        rho_hat=_wrap(_periodic_spline(times, rho_hat), T),
        Qc_mean=q_mean,
    )


@dataclass
class TailReport:
    passed: bool
    nu: float
    slope_right: float
    slope_left: float
    margin: float
    detail: str = ""


def decay_rate_bound(tail: TailHypothesis, sigma: float, c_tilde: float) -> float:
    return -c_tilde / (2 * sigma) + np.sqrt(tail.delta / sigma + 0.5 * (c_tilde / sigma) ** 2)


def decay_tail_check(eig: FloquetEigenpair, tail: TailHypothesis, sigma: float, c_tilde: float,
                     margin: float = 0.1) -> TailReport:
    """Fit the log-slope of ``p(0, .)`` on ``R0 <= |x| <= R - 1`` against the bound ``nu``.

    The slope on each side is measured against ``|x|``; it must not exceed
    ``-nu + margin``. Sides whose samples have all underflowed count as
    passing (decay faster than anything representable).
    """
    grid = eig.grid
    x = grid.nodes
    p = eig.p0
    nu = float(decay_rate_bound(tail, sigma, c_tilde))
    slopes = []
    notes = []
    for side, mask in (("right", (x >= tail.R0) & (x <= grid.R - 1.0)),
                       ("left", (x <= -tail.R0) & (x >= -(grid.R - 1.0)))):
        ok = mask & (p > 1e-300)
        if ok.sum() < 3:
            slopes.append(-np.inf)
            notes.append(f"{side}: fewer than 3 representable samples")
            continue
        s = np.polyfit(np.abs(x[ok]), np.log(p[ok]), 1)[0]
        slopes.append(float(s))
    passed = all(s <= -nu + margin for s in slopes)
    return TailReport(passed, nu, slopes[0], slopes[1], margin, "; ".join(notes))
