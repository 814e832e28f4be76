"""Small-mutation limit: Hopf-Cole profiles, the lag trait, the corrector and moments.

Everything here works with the rescaled speed ``c`` (so ``c_tilde = c * eps``
and ``sigma = eps**2``). Functions take an :class:`~evoshift.model.AveragedRate`
for the time-averaged landscape and, where time dependence matters, the model.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline

from .discretization import Grid1D, integrate
from .errors import AmbiguousRoot, DegenerateCurvature, NegativeRadicand, NoRoot
from .model import AveragedRate, GrowthRateModel, QuadraticRateParams, quadratic_model, averaged_rate, simpson_weights

DENSITY_FLOOR = 1e-300
RADICAND_TOL = 1e-12
BLEND_HALF_WIDTH = 1e-3

# Gauss-Legendre nodes on [0, 1] for the substituted profile integrals.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(48)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def hopf_cole(density, epsilon: float) -> np.ndarray:
    """``eps * (log n + log(2 pi eps) / 2)``; densities below 1e-300 are floored first."""
    n = np.maximum(np.asarray(density, dtype=float), DENSITY_FLOOR)
    return epsilon * (np.log(n) + 0.5 * np.log(2.0 * np.pi * epsilon))


def inverse_hopf_cole(psi, epsilon: float) -> np.ndarray:
    return np.exp(np.asarray(psi, dtype=float) / epsilon) / np.sqrt(2.0 * np.pi * epsilon)


def _radicand(avg: AveragedRate, y):
    val = avg.abar_max - np.asarray(avg.abar(y), dtype=float)
    worst = float(np.min(val)) if np.size(val) else 0.0
    if worst < -RADICAND_TOL:
        raise NegativeRadicand(f"averaged rate exceeds its maximum by {-worst:.3g}; x_m is mislocated")
    return np.maximum(val, 0.0)


def root_distance(avg: AveragedRate, x) -> np.ndarray:
    """``|int_{x_m}^x sqrt(abar(x_m) - abar(y)) dy|`` for each ``x``.

    With ``y = x_m +/- s**2`` the integrand becomes ``2 s sqrt(...)``, which is
    smooth at ``s = 0``; a fixed Gauss-Legendre rule on eight panels then
    reaches machine precision for smooth averaged rates.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    h = x - avg.x_m
    side = np.where(h < 0.0, -1.0, 1.0)
    smax = np.sqrt(np.abs(h))
    panels = 8
    out = np.zeros_like(x)
    for p in range(panels):
        s = smax[:, None] * (p + _GL_X[None, :]) / panels
        y = avg.x_m + side[:, None] * s * s
        f = 2.0 * s * np.sqrt(_radicand(avg, y))
        out += (f @ _GL_W) * smax / panels
    return out


def solve_xbar(avg: AveragedRate, c: float, scan_points: int = 4001, tol: float = 1e-12) -> float:
    """Lag trait: the root of ``abar(x) = abar(x_m) - c**2/4`` closest to ``x_m`` from the left."""
    if c < 0:
        raise ValueError("c must be non-negative")
    if c == 0.0:
        return avg.x_m
    target = avg.abar_max - 0.25 * c * c
    lo = avg.bracket[0]
    xs = np.linspace(avg.x_m, lo, scan_points)
    f = np.asarray(avg.abar(xs), dtype=float) - target
    crossings = np.flatnonzero(np.signbit(f[1:]) != np.signbit(f[:-1]))
    if crossings.size == 0:
        raise NoRoot(f"abar never drops to {target:.6g} on [{lo}, {avg.x_m:.6g}]")
    if crossings.size > 1:
        raise AmbiguousRoot(f"{crossings.size} crossings of abar = {target:.6g} left of x_m")
    i = crossings[0]
    right, left = xs[i], xs[i + 1]
    g = lambda y: float(avg.abar(np.float64(y))) - target  # noqa: E731
    for _ in range(200):
        if right - left < tol:
            break
        mid = 0.5 * (left + right)
        if g(mid) > 0.0:
            right = mid
        else:
            left = mid
    return 0.5 * (left + right)


@dataclass(frozen=True)
class HJProfile:
    avg: AveragedRate
    x_m: float
    x_bar: float
    rho_bar: float
    c: float
    offset: float  # int_{x_bar}^{x_m} sqrt(abar(x_m) - abar)

    def psi(self, x):
        x = np.asarray(x, dtype=float)
        val = 0.5 * self.c * (self.x_bar - x) + self.offset - root_distance(self.avg, x).reshape(x.shape)
        return val if val.ndim else float(val)

    def psi_x(self, x):
        x = np.asarray(x, dtype=float)
        root = np.sqrt(_radicand(self.avg, x))
        return -0.5 * self.c + np.where(x < self.x_m, root, -root)

    def psi_xx(self, x):
        return psi_second_derivative(self.avg, x)

    def hj_residual(self, x):
        """``-|psi_x + c/2|**2 - abar + rho_bar + c**2/4`` with the branch formula for ``psi_x``."""
        x = np.asarray(x, dtype=float)
        return (-(self.psi_x(x) + 0.5 * self.c) ** 2 - np.asarray(self.avg.abar(x), dtype=float)
                + self.rho_bar + 0.25 * self.c ** 2)

    def growth_bound(self, delta: float) -> float:
        """Decay constant ``-c/2 + sqrt(delta + c**2/2)`` of the linear upper bound on psi."""
        return -0.5 * self.c + np.sqrt(delta + 0.5 * self.c ** 2)


def explicit_psi(avg: AveragedRate, x_bar: float, c: float) -> HJProfile:
    offset = float(root_distance(avg, x_bar)[0])
    return HJProfile(avg=avg, x_m=avg.x_m, x_bar=float(x_bar),
                     rho_bar=avg.abar_max - 0.25 * c * c, c=float(c), offset=offset)


def psi_second_derivative(avg: AveragedRate, x):
    """Branch formula for ``psi_xx``; at ``x_m`` it is ``-sqrt(-abar_xx(x_m)/2)``."""
    x = np.asarray(x, dtype=float)
    centre = -np.sqrt(max(-avg.abar_dxx_at_xm, 0.0) / 2.0)
    root = np.sqrt(_radicand(avg, x))
    dx = np.asarray(avg.abar_dx(x), dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        left = -dx / (2.0 * root)
        right = dx / (2.0 * root)
    out = np.where(x < avg.x_m, left, right)
    out = np.where((x == avg.x_m) | (root == 0.0), centre, out)
    return out if out.ndim else float(out)


@dataclass
class CorrectorData:
    times: np.ndarray
    D_values: np.ndarray
    lambda2: float
    K: float
    x_bar: float
    _phi_x0: Callable = field(repr=False)
    _phi_x: Callable = field(repr=False)
    _G: Callable = field(repr=False)

    def phi_x0(self, x):
        return self._phi_x0(x)

    def G(self, x):
        return self._G(x)

    def phi_x(self, x):
        """``d/dx phi`` at every stored time; shape ``(len(times),) + x.shape``."""
        return self._phi_x(x)

    def D(self, t):
        return _periodic_eval(self.times, self.D_values, t)

    @property
    def D_mean(self) -> float:
        T = self.times[-1]
        return float(simpson_weights(self.times.size - 1, T) @ self.D_values / T)


def _periodic_eval(times, values, t):
    vals = np.array(values, dtype=float)
    vals[-1] = vals[0]
    spline = CubicSpline(times, vals, bc_type="periodic")
    return spline(np.mod(np.asarray(t, dtype=float), times[-1]))


def _time_grid(T, n_times):
    n = n_times + (n_times % 2)
    return np.linspace(0.0, T, n + 1)


def corrector(model: GrowthRateModel, avg: AveragedRate, profile: HJProfile,
              n_times: int = 1024, x_range: Optional[tuple] = None, n_x: int = 801) -> CorrectorData:
    """First-order corrector data: ``G``, ``d/dx phi``, ``D(t)``, ``lambda2`` and ``K``.

    ``d/dx phi(0, x)`` has a removable singularity at ``x_m``. Within
    ``1e-3`` of it the value is replaced by the quartic through the exact
    limit and the four values at ``x_m +/- 1e-3``, ``x_m +/- 2e-3``.
    """
    axx = avg.abar_dxx_at_xm
    if axx >= -1e-10:
        raise DegenerateCurvature(f"abar_xx(x_m) = {axx:.3g} is not negative")
    T = model.period_T
    t = _time_grid(T, n_times)
    tw = simpson_weights(t.size - 1, T)
    x_m = avg.x_m

    def cum_ax(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        vals = np.broadcast_to(np.asarray(model.dx(t[:, None], x[None, :]), dtype=float), (t.size, x.size))
        return cumulative_simpson(vals, x=t, axis=0, initial=0.0)

    def G(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        double = tw @ cum_ax(x)
        return -double / T + 0.5 * T * np.asarray(avg.abar_dx(x), dtype=float)

    limit = float(G(x_m)[0] - avg.abar_dxxx(np.float64(x_m)) / (6.0 * axx))

    def raw_phi_x0(x):
        f = _radicand(avg, x)
        dx = np.asarray(avg.abar_dx(x), dtype=float)
        root = np.sqrt(-2.0 * axx * f)
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = (dx + np.where(x < x_m, -root, root)) / (4.0 * f)
        return G(x) + frac

    d = BLEND_HALF_WIDTH
    knots = np.array([-2 * d, -d, d, 2 * d])
    kvals = raw_phi_x0(x_m + knots)
    blend = np.polyfit(np.r_[knots, 0.0], np.r_[kvals, limit], 4)

    def phi_x0(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        near = np.abs(x - x_m) < d
        out = np.empty_like(x)
        if (~near).any():
            out[~near] = raw_phi_x0(x[~near])
        if near.any():
            out[near] = np.polyval(blend, x[near] - x_m)
        return out

    def phi_x(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return phi_x0(x)[None, :] + cum_ax(x) - t[:, None] * np.asarray(avg.abar_dx(x), dtype=float)[None, :]

    D_values = phi_x(profile.x_bar)[:, 0]
    lam2 = float(np.sqrt(-axx / 2.0))

    lo, hi = x_range if x_range is not None else (x_m - 2.0, x_m + 2.0)
    xs = np.linspace(lo, hi, n_x)
    px = phi_x(xs)
    pxx = np.gradient(px, xs, axis=1)
    K = float(np.max(px ** 2 + np.abs(pxx)))
    return CorrectorData(times=t, D_values=D_values, lambda2=lam2, K=K, x_bar=profile.x_bar,
                         _phi_x0=phi_x0, _phi_x=phi_x, _G=G)


def quadratic_D(params: QuadraticRateParams, c: float, t, n_times: int = 4096) -> np.ndarray:
    """Closed-form ``D(t)`` of the quadratic family (single and double time integrals)."""
    T = params.period_T
    ts = _time_grid(T, n_times)
    x_bar = params.x_m - c / (2.0 * np.sqrt(params.gbar))
    g = np.broadcast_to(np.asarray(params.g(ts), dtype=float), ts.shape)
    th = np.broadcast_to(np.asarray(params.theta(ts), dtype=float), ts.shape)
    inner = cumulative_simpson(g * (x_bar - th), x=ts, initial=0.0)
    double = simpson_weights(ts.size - 1, T) @ inner
    vals = -c * np.sqrt(params.gbar) * (ts / T - 0.5) * T + 2.0 * double / T - 2.0 * inner
    return _periodic_eval(ts, vals, t)


@dataclass(frozen=True)
class TaylorCoefficients:
    """``psi(x_bar + h) ~ -A/2 h**2 + B h**3 + C h**4``."""

    A: float
    B: float
    C: float
    fit_residual: float


def taylor_coefficients(profile: HJProfile, half_width: float = 0.2, n_samples: int = 401) -> TaylorCoefficients:
    h = np.linspace(-half_width, half_width, n_samples)
    vals = profile.psi(profile.x_bar + h)
    coef = np.polynomial.polynomial.polyfit(h, vals, 4)
    fit = np.polynomial.polynomial.polyval(h, coef)
    return TaylorCoefficients(A=float(-2.0 * coef[2]), B=float(coef[3]), C=float(coef[4]),
                              fit_residual=float(np.abs(fit - vals).max()))


@dataclass(frozen=True)
class ExpansionRow:
    epsilon: float
    rho_bar: float
    critical_speed: float


@dataclass(frozen=True)
class AsymptoticReport:
    c: float
    x_m: float
    abar_max: float
    lambda2: float
    rho_bar_limit: float
    critical_speed_limit: float
    rows: tuple

    def as_dict(self) -> dict:
        return {
            "c": self.c, "x_m": self.x_m, "abar_max": self.abar_max, "lambda2": self.lambda2,
            "rho_bar_limit": self.rho_bar_limit, "critical_speed_limit": self.critical_speed_limit,
            "rows": [r.__dict__ for r in self.rows],
        }


def predicted_rho_bar(avg: AveragedRate, c: float, epsilon: float) -> float:
    lam2 = np.sqrt(-avg.abar_dxx_at_xm / 2.0)
    return float(avg.abar_max - 0.25 * c * c - epsilon * lam2)


def predicted_critical_speed(avg: AveragedRate, epsilon: float) -> float:
    """Rescaled critical speed ``c*_eps`` to first order."""
    return float(2.0 * np.sqrt(avg.abar_max) - epsilon * np.sqrt(-avg.abar_dxx_at_xm / (2.0 * avg.abar_max)))


def expansion_report(avg: AveragedRate, c: float, epsilon_list) -> AsymptoticReport:
    if avg.abar_dxx_at_xm >= -1e-10:
        raise DegenerateCurvature(f"abar_xx(x_m) = {avg.abar_dxx_at_xm:.3g} is not negative")
    rows = tuple(ExpansionRow(float(e), predicted_rho_bar(avg, c, e), predicted_critical_speed(avg, e))
                 for e in epsilon_list)
    return AsymptoticReport(
        c=float(c), x_m=avg.x_m, abar_max=avg.abar_max,
        lambda2=float(np.sqrt(-avg.abar_dxx_at_xm / 2.0)),
        rho_bar_limit=avg.abar_max - 0.25 * c * c,
        critical_speed_limit=float(2.0 * np.sqrt(avg.abar_max)),
        rows=rows,
    )


@dataclass
class MomentReport:
    times: np.ndarray
    mu_measured: np.ndarray
    var_measured: np.ndarray
    mu_predicted: np.ndarray
    var_predicted: float
    D_values: np.ndarray
    epsilon: float
    x_bar: float

    @property
    def mean_gap(self) -> float:
        return float(np.abs(self.mu_measured - self.mu_predicted).max())

    @property
    def var_gap(self) -> float:
        return float(np.abs(self.var_measured - self.var_predicted).max())

    @property
    def mu_period_average(self) -> float:
        return _period_mean(self.times, self.mu_measured)

    @property
    def var_period_average(self) -> float:
        return _period_mean(self.times, self.var_measured)


def _period_mean(times, values) -> float:
    times = np.asarray(times, dtype=float)
    n = times.size - 1
    L = times[-1] - times[0]
    if n >= 2 and n % 2 == 0:
        return float(simpson_weights(n, L) @ values / L)
    return float(np.trapz(values, times) / L)


def density_moments(grid: Grid1D, densities):
    """Mean and variance of each density row (trapezoid quadrature)."""
    n = np.atleast_2d(np.asarray(densities, dtype=float))
    x = grid.nodes
    mass = integrate(grid, n)
    mu = integrate(grid, n * x) / mass
    var = integrate(grid, n * (x[None, :] - mu[:, None]) ** 2) / mass
    return mu, var


def measure_moments(times, densities, grid: Grid1D, epsilon: float, corr: CorrectorData,
                    taylor: TaylorCoefficients, x_bar: float) -> MomentReport:
    """Measured moments of a periodic-regime density record, next to the predictions."""
    times = np.asarray(times, dtype=float)
    mu, var = density_moments(grid, densities)
    D = corr.D(times)
    A, B = taylor.A, taylor.B
    return MomentReport(
        times=times, mu_measured=mu, var_measured=var,
        mu_predicted=x_bar + epsilon * (3.0 * B / A ** 2 + D / A),
        var_predicted=epsilon / A, D_values=D, epsilon=float(epsilon), x_bar=float(x_bar),
    )


@dataclass
class CaseScenario:
    label: str
    rho_bar: float
    mean_trait: float
    critical_speed: float
    x_bar: float
    rho_bar_solver: Optional[float] = None
    mean_trait_solver: Optional[float] = None
    critical_speed_solver: Optional[float] = None


@dataclass
class CaseComparison:
    periodic: CaseScenario
    constant: CaseScenario
    c: float
    epsilon: float
    verdicts: dict

    def as_dict(self) -> dict:
        return {"c": self.c, "epsilon": self.epsilon, "periodic": self.periodic.__dict__,
                "constant": self.constant.__dict__, "verdicts": self.verdicts}


def _ordering(p, q, tol=1e-12):
    if p is None or q is None:
        return None
    if abs(p - q) <= tol * max(1.0, abs(p), abs(q)):
        return "equal"
    return "periodic<constant" if p < q else "periodic>constant"


def _case_formulas(label, params, c, epsilon):
    avg = averaged_rate(quadratic_model(params))
    x_bar = solve_xbar(avg, c)
    return CaseScenario(
        label=label,
        rho_bar=predicted_rho_bar(avg, c, epsilon),
        mean_trait=x_bar,
        critical_speed=predicted_critical_speed(avg, epsilon),
        x_bar=x_bar,
    ), avg


def case_comparison(params_periodic: QuadraticRateParams, params_constant: QuadraticRateParams,
                    c: float, epsilon: float, grid: Optional[Grid1D] = None,
                    steps_per_period: int = 512, eigen_solver: Optional[Callable] = None) -> CaseComparison:
    """Compare a fluctuating environment with its constant counterpart.

    Formula values come from the first-order expansions. With ``grid`` set,
    each scenario is also solved: ``rho_bar = -lambda`` at ``(eps**2, c eps)``,
    the rescaled critical speed from ``lambda_0``, and the mean trait as the
    period average of the mean of the normalized eigenfunction.
    """
    from .floquet import critical_speed_from_lambda, principal_eigenpair

    solve = eigen_solver or (lambda m, s, ct: principal_eigenpair(m, s, ct, grid, steps_per_period))
    out = {}
    theta_ref = {}
    for label, params in (("periodic", params_periodic), ("constant", params_constant)):
        sc, avg = _case_formulas(label, params, c, epsilon)
        theta_ref[label] = avg.x_m
        if grid is not None:
            model = quadratic_model(params)
            sigma = epsilon ** 2
            eig = solve(model, sigma, c * epsilon)
            eig0 = solve(model, sigma, 0.0)
            sc.rho_bar_solver = -eig.lam
            sc.critical_speed_solver = critical_speed_from_lambda(eig0.lam, sigma) / epsilon
            mu, _ = density_moments(grid, eig.eigenfunction)
            sc.mean_trait_solver = _period_mean(eig.times, mu)
        out[label] = sc
    p, q = out["periodic"], out["constant"]
    lag_p = abs(p.mean_trait - theta_ref["periodic"])
    lag_q = abs(q.mean_trait - theta_ref["constant"])
    verdicts = {
        "rho_bar": _ordering(p.rho_bar, q.rho_bar),
        "critical_speed": _ordering(p.critical_speed, q.critical_speed),
        "lag": _ordering(lag_p, lag_q),
        "rho_bar_solver": _ordering(p.rho_bar_solver, q.rho_bar_solver, 1e-9),
        "critical_speed_solver": _ordering(p.critical_speed_solver, q.critical_speed_solver, 1e-9),
    }
    return CaseComparison(periodic=p, constant=q, c=float(c), epsilon=float(epsilon), verdicts=verdicts)
