"""Periodic growth-rate landscapes and their time averages.

A model is the growth rate ``a(t, x)`` seen as a direct function of time:
the environmental state only ever enters through its composition with the
periodic environment, so it is never represented on its own.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import NoInteriorMaximum, NonPositiveMaximum, NonPositivePressure

RateFn = Callable[[np.ndarray, np.ndarray], np.ndarray]
ProfileFn = Callable[[np.ndarray], np.ndarray]

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def simpson_weights(n_intervals: int, length: float) -> np.ndarray:
    """Composite Simpson weights for ``n_intervals + 1`` uniform nodes."""
    if n_intervals < 2 or n_intervals % 2:
        raise ValueError("Simpson's rule needs an even number of intervals >= 2")
    h = length / n_intervals
    w = np.full(n_intervals + 1, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w * h / 3.0


def _fd_step(x, scale):
    return np.maximum(scale, scale * np.abs(x))


def central_dx(f, x):
    x = np.asarray(x, dtype=float)
    h = _fd_step(x, 1e-5)
    return (f(x + h) - f(x - h)) / (2.0 * h)


def central_dxx(f, x):
    # five-point, fourth order
    x = np.asarray(x, dtype=float)
    h = _fd_step(x, 1e-3)
    return (-f(x + 2 * h) + 16 * f(x + h) - 30 * f(x) + 16 * f(x - h) - f(x - 2 * h)) / (12.0 * h * h)


def central_dxxx(f, x):
    # seven-point, fourth order
    x = np.asarray(x, dtype=float)
    h = _fd_step(x, 1e-2)
    return (
        -f(x + 3 * h) + 8 * f(x + 2 * h) - 13 * f(x + h)
        + 13 * f(x - h) - 8 * f(x - 2 * h) + f(x - 3 * h)
    ) / (8.0 * h ** 3)


@dataclass(frozen=True)
class AverageClosedForm:
    """Exact time average of a rate and its x-derivatives, when known."""

    abar: ProfileFn
    abar_dx: ProfileFn
    abar_dxx: ProfileFn
    abar_dxxx: ProfileFn
    x_m: Optional[float] = None


@dataclass(frozen=True)
class GrowthRateModel:
    """T-periodic growth rate ``rate(t, x)``.

    ``rate`` must broadcast over numpy arrays. Missing x-derivatives fall
    back to central finite differences.
    """

    period_T: float
    rate: RateFn
    rate_dx: Optional[RateFn] = None
    rate_dxx: Optional[RateFn] = None
    rate_dxxx: Optional[RateFn] = None
    sup_bound_d0: Optional[float] = None
    closed_average: Optional[AverageClosedForm] = None
    time_constant: bool = False
    name: str = "custom"

    def __call__(self, t, x):
        return self.rate(t, x)

    def dx(self, t, x):
        if self.rate_dx is not None:
            return self.rate_dx(t, x)
        return central_dx(lambda y: self.rate(t, y), x)

    def dxx(self, t, x):
        if self.rate_dxx is not None:
            return self.rate_dxx(t, x)
        return central_dxx(lambda y: self.rate(t, y), x)

    def dxxx(self, t, x):
        if self.rate_dxxx is not None:
            return self.rate_dxxx(t, x)
        return central_dxxx(lambda y: self.rate(t, y), x)

    def without_closed_forms(self) -> "GrowthRateModel":
        """Same rate, but every derived quantity goes through generic numerics."""
        return replace(self, rate_dx=None, rate_dxx=None, rate_dxxx=None, closed_average=None)


def time_constant_model(profile: ProfileFn, period_T: float = 1.0,
                        profile_dx: Optional[ProfileFn] = None,
                        profile_dxx: Optional[ProfileFn] = None,
                        profile_dxxx: Optional[ProfileFn] = None,
                        name: str = "time-constant") -> GrowthRateModel:
    """Wrap a time-independent rate ``a(x)``; its average is itself."""

    def lift(f):
        if f is None:
            return None
        return lambda t, x: f(np.asarray(x, dtype=float)) + 0.0 * np.asarray(t, dtype=float)

    closed = None
    if profile_dx is not None and profile_dxx is not None:
        dxxx = profile_dxxx or (lambda x: central_dxxx(profile, x))
        closed = AverageClosedForm(profile, profile_dx, profile_dxx, dxxx)
    return GrowthRateModel(
        period_T=period_T,
        rate=lift(profile),
        rate_dx=lift(profile_dx),
        rate_dxx=lift(profile_dxx),
        rate_dxxx=lift(profile_dxxx),
        closed_average=closed,
        time_constant=True,
        name=name,
    )


def tabulated_model(t_nodes, x_nodes, values, period_T: float) -> GrowthRateModel:
    """Bilinear interpolation of a rate table; ``t`` is wrapped into one period.

    ``t_nodes`` must lie in ``[0, T)`` or ``[0, T]``; when the last node is
    below ``T`` the first row is repeated at ``T`` to close the cycle. Outside
    the x range the nearest table column is used.
    """
    t_nodes = np.asarray(t_nodes, dtype=float)
    x_nodes = np.asarray(x_nodes, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.shape != (t_nodes.size, x_nodes.size):
        raise ValueError(f"table shape {values.shape} != ({t_nodes.size}, {x_nodes.size})")
    if t_nodes[-1] < period_T - 1e-12:
        t_nodes = np.append(t_nodes, period_T)
        values = np.vstack([values, values[:1]])
    interp = RegularGridInterpolator((t_nodes, x_nodes), values, method="linear")

    def rate(t, x):
        t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
        tt = np.mod(t, period_T)
        xx = np.clip(x, x_nodes[0], x_nodes[-1])
        return interp(np.stack([tt.ravel(), xx.ravel()], axis=-1)).reshape(t.shape)

    return GrowthRateModel(
        period_T=period_T,
        rate=rate,
        sup_bound_d0=float(np.abs(values).max()),
        name="tabulated",
    )


@dataclass(frozen=True)
class QuadraticRateParams:
    """``a(t, x) = r - g(t) (x - theta(t))**2`` with T-periodic ``g`` and ``theta``.

    ``gbar``, ``g1`` and ``g2`` are the period averages of ``g``, ``g*theta``
    and ``g*theta**2``; they are computed on construction.
    """

    r: float
    g: Callable[[np.ndarray], np.ndarray]
    theta: Callable[[np.ndarray], np.ndarray]
    period_T: float = 1.0
    quadrature_points: int = 4096
    gbar: float = field(init=False)
    g1: float = field(init=False)
    g2: float = field(init=False)

    def __post_init__(self):
        t = np.linspace(0.0, self.period_T, self.quadrature_points + 1)
        w = simpson_weights(self.quadrature_points, self.period_T) / self.period_T
        gv = np.broadcast_to(np.asarray(self.g(t), dtype=float), t.shape)
        th = np.broadcast_to(np.asarray(self.theta(t), dtype=float), t.shape)
        if gv.min() <= 0.0:
            raise NonPositivePressure(f"selection pressure g must stay positive (min {gv.min():.3g})")
        object.__setattr__(self, "gbar", float(w @ gv))
        object.__setattr__(self, "g1", float(w @ (gv * th)))
        object.__setattr__(self, "g2", float(w @ (gv * th * th)))

    @property
    def x_m(self) -> float:
        return self.g1 / self.gbar

    @property
    def abar_max(self) -> float:
        return self.r + self.g1 ** 2 / self.gbar - self.g2


def quadratic_model(params: QuadraticRateParams) -> GrowthRateModel:
    r, g, th = params.r, params.g, params.theta
    gbar, g1, g2 = params.gbar, params.g1, params.g2

    def rate(t, x):
        return r - g(t) * (x - th(t)) ** 2

    def rate_dx(t, x):
        return -2.0 * g(t) * (x - th(t))

    def rate_dxx(t, x):
        return -2.0 * g(t) + 0.0 * np.asarray(x, dtype=float)

    def rate_dxxx(t, x):
        return 0.0 * (np.asarray(t, dtype=float) + np.asarray(x, dtype=float))

    closed = AverageClosedForm(
        abar=lambda x: r - gbar * np.asarray(x, dtype=float) ** 2 + 2.0 * g1 * np.asarray(x, dtype=float) - g2,
        abar_dx=lambda x: -2.0 * gbar * np.asarray(x, dtype=float) + 2.0 * g1,
        abar_dxx=lambda x: -2.0 * gbar + 0.0 * np.asarray(x, dtype=float),
        abar_dxxx=lambda x: 0.0 * np.asarray(x, dtype=float),
        x_m=params.x_m,
    )
    return GrowthRateModel(
        period_T=params.period_T,
        rate=rate,
        rate_dx=rate_dx,
        rate_dxx=rate_dxx,
        rate_dxxx=rate_dxxx,
        closed_average=closed,
        name="quadratic",
    )


@dataclass(frozen=True)
class AveragedRate:
    """Time average of a model together with its maximizer ``x_m``."""

    abar: ProfileFn
    abar_dx: ProfileFn
    abar_dxx: ProfileFn
    abar_dxxx: ProfileFn
    x_m: float
    abar_max: float
    abar_dxx_at_xm: float
    bracket: tuple
    unique_max: bool = True
    second_best_gap: float = np.inf


def period_average(model: GrowthRateModel, fn: RateFn, quadrature_points: int = 256):
    """``x -> (1/T) * integral of fn(t, x) over one period`` via composite Simpson."""
    n = quadrature_points + (quadrature_points % 2)
    T = model.period_T
    t = np.linspace(0.0, T, n + 1)
    w = simpson_weights(n, T) / T

    def avg(x):
        x = np.asarray(x, dtype=float)
        vals = fn(t.reshape((-1,) + (1,) * x.ndim), x[None, ...])
        vals = np.broadcast_to(vals, (t.size,) + x.shape)
        return np.tensordot(w, vals, axes=(0, 0))

    return avg


def _golden_max(f, lo, hi, tol=1e-12, max_iter=200):
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _bisect_root(f, lo, hi, tol=1e-13, max_iter=200):
    flo = f(lo)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0 or hi - lo < tol:
            return mid
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def averaged_rate(model: GrowthRateModel, quadrature_points: int = 256,
                  bracket: tuple = (-6.0, 6.0), scan_points: int = 4001) -> AveragedRate:
    """Average the rate over one period and locate its unique maximizer.

    Closed forms from the model are used when present, otherwise the average
    is taken with composite Simpson over ``quadrature_points`` intervals.
    ``x_m`` is found by a coarse scan, golden-section refinement, and a final
    bisection on the sign of the averaged derivative.
    """
    if quadrature_points < 16:
        raise ValueError("quadrature_points must be >= 16")
    lo, hi = float(bracket[0]), float(bracket[1])
    closed = model.closed_average
    if closed is not None:
        abar, abar_dx, abar_dxx, abar_dxxx = closed.abar, closed.abar_dx, closed.abar_dxx, closed.abar_dxxx
    else:
        abar = period_average(model, model.rate, quadrature_points)
        if model.rate_dx is not None:
            abar_dx = period_average(model, model.rate_dx, quadrature_points)
        else:
            abar_dx = lambda x: central_dx(abar, x)  # noqa: E731
        if model.rate_dxx is not None:
            abar_dxx = period_average(model, model.rate_dxx, quadrature_points)
        else:
            abar_dxx = lambda x: central_dxx(abar, x)  # noqa: E731
        if model.rate_dxxx is not None:
            abar_dxxx = period_average(model, model.rate_dxxx, quadrature_points)
        else:
            abar_dxxx = lambda x: central_dxxx(abar, x)  # noqa: E731

    xs = np.linspace(lo, hi, scan_points)
    vals = np.asarray(abar(xs), dtype=float)
    i = int(np.argmax(vals))
    h = xs[1] - xs[0]

    # local maxima of the scan, for the uniqueness check
    interior = (vals[1:-1] >= vals[:-2]) & (vals[1:-1] >= vals[2:])
    peaks = np.flatnonzero(interior) + 1
    peaks = peaks[np.abs(peaks - i) > 1]
    second = float(vals[peaks].max()) if peaks.size else -np.inf

    f = lambda y: float(abar(np.float64(y)))  # noqa: E731
    a, b = max(lo, xs[i] - h), min(hi, xs[i] + h)
    x_m = _golden_max(f, a, b)
    da, db = float(abar_dx(np.float64(a))), float(abar_dx(np.float64(b)))
    if da > 0.0 > db:
        x_m = _bisect_root(lambda y: float(abar_dx(np.float64(y))), a, b)
    if closed is not None and closed.x_m is not None:
        x_m = float(closed.x_m)

    edge = 1e-8 * max(1.0, hi - lo)
    if x_m - lo < edge or hi - x_m < edge:
        raise NoInteriorMaximum(f"maximizer {x_m:.6g} sits on the bracket [{lo}, {hi}]")
    abar_max = f(x_m)
    if abar_max <= 0.0:
        raise NonPositiveMaximum(f"max of averaged rate is {abar_max:.6g} <= 0")
    # compare scan values against each other so the refinement does not bias the gap
    gap = float(vals[i]) - second
    return AveragedRate(
        abar=abar,
        abar_dx=abar_dx,
        abar_dxx=abar_dxx,
        abar_dxxx=abar_dxxx,
        x_m=float(x_m),
        abar_max=float(abar_max),
        abar_dxx_at_xm=float(abar_dxx(np.float64(x_m))),
        bracket=(lo, hi),
        unique_max=bool(gap > 1e-8),
        second_best_gap=float(gap),
    )


@dataclass(frozen=True)
class TailHypothesis:
    """Margin ``delta`` and radius ``R0`` of the small-at-infinity condition."""

    delta: float
    R0: float


@dataclass
class HypothesisCheck:
    name: str
    passed: bool
    detail: str
    worst: Optional[tuple] = None


@dataclass
class HypothesisReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_dict(self):
        return {c.name: {"passed": c.passed, "detail": c.detail, "worst": c.worst} for c in self.checks}


def check_hypotheses(model: GrowthRateModel, avg: AveragedRate, lam: float,
                     tail: TailHypothesis, x_samples=None, n_times: int = 64,
                     shift_penalty: Optional[float] = None) -> HypothesisReport:
    """A-posteriori diagnostic of the standing assumptions on a sampled window.

    ``lam`` is the already computed principal eigenvalue. ``shift_penalty`` is
    ``c_tilde**2 / (4 sigma)``; when given, the lag-trait condition is checked
    as well. Nothing is raised: every outcome goes into the report.
    """
    if x_samples is None:
        x_samples = np.linspace(avg.bracket[0], avg.bracket[1], 1201)
    x = np.asarray(x_samples, dtype=float)
    t = np.linspace(0.0, model.period_T, n_times, endpoint=False)
    vals = np.asarray(model.rate(t[:, None], x[None, :]), dtype=float)
    vals = np.broadcast_to(vals, (t.size, x.size))
    checks = []

    shifted = np.asarray(model.rate(t[:, None] + model.period_T, x[None, :]), dtype=float)
    per_err = float(np.abs(np.broadcast_to(shifted, vals.shape) - vals).max())
    bound = model.sup_bound_d0
    mag = float(np.abs(vals).max())
    ok1 = per_err <= 1e-10 * max(1.0, mag) and (bound is None or mag <= bound)
    j, k = np.unravel_index(int(np.argmax(np.abs(vals))), vals.shape)
    checks.append(HypothesisCheck(
        "H1", ok1,
        f"periodicity error {per_err:.3g}; sup|a| on window {mag:.6g}"
        + ("" if bound is None else f" (bound {bound:.6g})"),
        (float(t[j]), float(x[k])),
    ))

    checks.append(HypothesisCheck(
        "H2a", avg.abar_max > 0.0, f"max abar = {avg.abar_max:.6g} at x_m = {avg.x_m:.6g}",
        (None, avg.x_m),
    ))
    checks.append(HypothesisCheck(
        "H2b", avg.unique_max,
        f"gap to second-best local max {avg.second_best_gap:.3g}", (None, avg.x_m),
    ))

    if shift_penalty is not None:
        target = avg.abar_max - shift_penalty
        left = x[x <= avg.x_m]
        g = np.asarray(avg.abar(left), dtype=float) - target
        crossings = int(np.count_nonzero(np.sign(g[1:]) != np.sign(g[:-1])))
        checks.append(HypothesisCheck(
            "H3", crossings == 1,
            f"{crossings} sign change(s) of abar - (abar(x_m) - penalty) left of x_m",
        ))

    mask = np.abs(x) >= tail.R0
    if mask.any():
        excess = vals[:, mask] + lam + tail.delta
        j, k = np.unravel_index(int(np.argmax(excess)), excess.shape)
        worst = float(excess[j, k])
        checks.append(HypothesisCheck(
            "Hc", worst <= 0.0,
            f"max over |x|>=R0 of a + lambda + delta = {worst:.6g}",
            (float(t[j]), float(x[mask][k])),
        ))
    else:
        checks.append(HypothesisCheck("Hc", False, "no samples with |x| >= R0 in the window"))
    return HypothesisReport(checks)
