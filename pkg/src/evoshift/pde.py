"""Time stepping for the shifted-frame selection-mutation equation.

Nonlinear problem (moving frame, speed ``c_tilde``)::

    n_t = c_tilde n_x + sigma n_xx + n (a(t, x) - rho(t)),   rho = int n dx

and its linearization ``m = n exp(int_0^t rho)``. One step is IMEX: the
reaction enters as the exact factor ``exp(dt a(t + dt/2, x))``, diffusion and
drift are backward Euler (one tridiagonal solve). The nonlocal term uses the
identity ``n(t+dt) = m(t+dt) / (1 + int_t^{t+dt} rho_m)`` with the integral
taken by the trapezoid rule, which keeps ``rho`` positive for any step.

With ``use_liouville`` the drift is removed by working with
``M = m exp(k x)``, ``k = c_tilde / (2 sigma)``, which turns the drift into the
constant penalty ``c_tilde**2 / (4 sigma)`` in the reaction.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .discretization import Grid1D, advection_diffusion_operator, integrate
from .errors import OverflowRisk, PositivityLoss, StepRejected
from .model import GrowthRateModel

log = logging.getLogger(__name__)

LIOUVILLE_MAX_EXPONENT = 600.0
CLAMP_TOLERANCE = 1e-12


@dataclass(frozen=True)
class PdeState:
    time: float
    density: np.ndarray
    mass_rho: float

    @classmethod
    def from_density(cls, grid: Grid1D, time: float, density) -> "PdeState":
        density = np.array(density, dtype=float)
        return cls(time=float(time), density=density, mass_rho=float(integrate(grid, density)))


@dataclass(frozen=True)
class LinearState:
    """Linear-problem samples; ``transformed`` marks Liouville variables."""

    time: float
    values: np.ndarray
    transformed: bool = False


@dataclass(frozen=True)
class SolverConfig:
    steps_per_period: int = 512
    max_periods: int = 200
    extinction_threshold: float = 1e-8
    periodic_tolerance: float = 1e-6
    use_liouville: bool = False
    cycle_stride: int = 1

    def __post_init__(self):
        if self.steps_per_period < 64:
            raise ValueError("steps_per_period must be >= 64")
        if self.steps_per_period % 2:
            raise ValueError("steps_per_period must be even (Simpson quadrature over a period)")
        if self.max_periods < 1:
            raise ValueError("max_periods must be >= 1")
        if self.steps_per_period % self.cycle_stride:
            raise ValueError("cycle_stride must divide steps_per_period")

    def dt(self, period_T: float) -> float:
        return period_T / self.steps_per_period


def liouville_exponent(c_tilde: float, sigma: float) -> float:
    return c_tilde / (2.0 * sigma)


def _liouville_factor(c_tilde, sigma, grid, sign):
    k = liouville_exponent(c_tilde, sigma)
    if abs(k) * grid.R > LIOUVILLE_MAX_EXPONENT:
        raise OverflowRisk(f"(c_tilde/2 sigma) R = {abs(k) * grid.R:.1f} exceeds {LIOUVILLE_MAX_EXPONENT}")
    return np.exp(sign * k * grid.nodes)


def liouville_forward(state: LinearState, c_tilde: float, sigma: float, grid: Grid1D) -> LinearState:
    """``M = m exp((c_tilde / 2 sigma) x)``."""
    if state.transformed:
        raise ValueError("state is already in Liouville variables")
    f = _liouville_factor(c_tilde, sigma, grid, +1.0)
    return LinearState(state.time, np.asarray(state.values, dtype=float) * f, transformed=True)


def liouville_backward(state: LinearState, c_tilde: float, sigma: float, grid: Grid1D) -> LinearState:
    if not state.transformed:
        raise ValueError("state is not in Liouville variables")
    f = _liouville_factor(c_tilde, sigma, grid, -1.0)
    return LinearState(state.time, np.asarray(state.values, dtype=float) * f, transformed=False)


class Propagator:
    """Precomputed one-period stepping data for fixed ``(model, sigma, c_tilde, grid, dt)``.

    Works in "working variables": the density itself, or its Liouville
    transform when ``use_liouville`` is set. Row ``j`` of the reaction table
    holds ``exp(dt (a(t_j + dt/2, x) - shift))`` with ``t_j = j dt``.
    """

    def __init__(self, model: GrowthRateModel, sigma: float, c_tilde: float, grid: Grid1D,
                 steps_per_period: int = 512, use_liouville: bool = False,
                 backend=None, times=None, dt=None):
        if not sigma > 0:
            raise ValueError("sigma must be positive")
        self.model = model
        self.sigma = float(sigma)
        self.c_tilde = float(c_tilde)
        self.grid = grid
        self.steps_per_period = int(steps_per_period)
        self.dt = model.period_T / self.steps_per_period if dt is None else float(dt)
        self.use_liouville = bool(use_liouville)
        self.backend = backend or kernels.backend

        if self.use_liouville:
            self.k = liouville_exponent(self.c_tilde, self.sigma)
            self.to_working_factor = _liouville_factor(self.c_tilde, self.sigma, grid, +1.0)
            self.from_working_factor = _liouville_factor(self.c_tilde, self.sigma, grid, -1.0)
            drift, shift = 0.0, self.c_tilde ** 2 / (4.0 * self.sigma)
        else:
            self.k = 0.0
            self.to_working_factor = self.from_working_factor = np.ones(grid.n_points)
            drift, shift = self.c_tilde, 0.0
        self.shift = shift
        self.operator = advection_diffusion_operator(grid, drift, self.sigma)
        a, b, c = self.operator.implicit_matrix(self.dt)
        self.factorization = self.backend.factor(a, b, c)
        # mass weights in working variables
        self.mass_weights = np.ascontiguousarray(grid.weights * self.from_working_factor)

        if times is None:
            times = (np.arange(self.steps_per_period) + 0.5) * self.dt
        self.reaction_times = np.asarray(times, dtype=float)
        x = grid.nodes
        rates = np.asarray(model.rate(self.reaction_times[:, None], x[None, :]), dtype=float)
        rates = np.broadcast_to(rates, (self.reaction_times.size, x.size))
        table = np.exp(self.dt * (rates - shift))
        table[:, 0] = table[:, -1] = 0.0
        self.reaction = np.ascontiguousarray(table)

    @property
    def upwind(self) -> bool:
        return self.operator.upwind

    def to_working(self, values) -> np.ndarray:
        return np.ascontiguousarray(np.asarray(values, dtype=float) * self.to_working_factor)

    def from_working(self, values) -> np.ndarray:
        return np.asarray(values, dtype=float) * self.from_working_factor

    def row_index(self, time: float) -> int:
        j = time / self.dt
        jr = int(round(j))
        if abs(j - jr) > 1e-6:
            raise ValueError(f"time {time} is not on the step lattice dt={self.dt}")
        return jr % self.reaction.shape[0]

    def sweep_linear(self, work: np.ndarray, j0: int, nsteps: int, store=None) -> np.ndarray:
        return self.backend.linear_sweep(work, self.reaction, j0, nsteps, self.factorization, store)

    def sweep_nonlocal(self, work: np.ndarray, j0: int, nsteps: int, rho_out: np.ndarray,
                       start_time: float = 0.0) -> None:
        status, done, clamped = self.backend.nonlocal_sweep(
            work, self.reaction, j0, nsteps, self.factorization, self.mass_weights,
            self.dt, rho_out,
        )
        if clamped > CLAMP_TOLERANCE:
            raise PositivityLoss(f"clamping negative densities moved mass {clamped:.3g}")
        if status != kernels.STATUS_OK:
            raise StepRejected(
                f"mass changed by more than 50% in one step at t={start_time + done * self.dt:.6g}"
            )


def _single_step_propagator(model, sigma, c_tilde, grid, time, dt, use_liouville):
    if not dt > 0:
        raise ValueError("dt must be positive")
    return Propagator(model, sigma, c_tilde, grid, steps_per_period=1,
                      use_liouville=use_liouville, times=[time + 0.5 * dt], dt=dt)


def step_nonlocal(state: PdeState, model: GrowthRateModel, sigma: float, c_tilde: float,
                  grid: Grid1D, dt: float, use_liouville: bool = False) -> PdeState:
    """Advance the nonlinear equation by one step of size ``dt``."""
    prop = _single_step_propagator(model, sigma, c_tilde, grid, state.time, dt, use_liouville)
    work = prop.to_working(state.density)
    rho = np.empty(1)
    prop.sweep_nonlocal(work, 0, 1, rho, start_time=state.time)
    return PdeState.from_density(grid, state.time + dt, prop.from_working(work))


def step_linear(state: LinearState, model: GrowthRateModel, sigma: float, c_tilde: float,
                grid: Grid1D, dt: float, use_liouville: bool = False) -> LinearState:
    """One linear step; the result is returned in the variables it came in."""
    came_transformed = state.transformed
    values = np.asarray(state.values, dtype=float)
    if came_transformed:
        values = liouville_backward(state, c_tilde, sigma, grid).values
    prop = _single_step_propagator(model, sigma, c_tilde, grid, state.time, dt, use_liouville)
    work = prop.to_working(values)
    prop.sweep_linear(work, 0, 1)
    out = LinearState(state.time + dt, prop.from_working(work))
    if came_transformed:
        out = liouville_forward(out, c_tilde, sigma, grid)
    return out


def default_initial_density(grid: Grid1D, center: float, epsilon: float, mass: float = 1.0) -> np.ndarray:
    """Gaussian with standard deviation ``sqrt(epsilon)`` and the given mass."""
    x = grid.nodes
    g = np.exp(-((x - center) ** 2) / (2.0 * epsilon))
    g[0] = g[-1] = 0.0
    return mass * g / integrate(grid, g)


@dataclass
class Trajectory:
    verdict: str  # "Extinct" | "Periodic" | "Undecided"
    periods_run: int
    times: np.ndarray
    rho: np.ndarray
    period_states: list
    cycle_times: Optional[np.ndarray] = None
    cycle: Optional[np.ndarray] = None
    last_change: float = np.nan
    diagnostics: dict = field(default_factory=dict)

    @property
    def final_state(self) -> PdeState:
        return self.period_states[-1]

    def cycle_rho(self, grid: Grid1D) -> np.ndarray:
        return integrate(grid, self.cycle)


def simulate(n0: PdeState, model: GrowthRateModel, sigma: float, c_tilde: float, grid: Grid1D,
             config: SolverConfig = SolverConfig(), propagator: Optional[Propagator] = None) -> Trajectory:
    """Run period by period until extinction, a converged periodic regime, or ``max_periods``.

    The periodic test compares whole density snapshots one period apart in
    max norm, both absolutely and relative to the current peak. On a Periodic verdict one extra period is integrated to record
    the cycle (every ``cycle_stride`` steps, endpoints included).
    """
    T = model.period_T
    spp = config.steps_per_period
    prop = propagator or Propagator(model, sigma, c_tilde, grid, spp, use_liouville=config.use_liouville)
    j0 = prop.row_index(n0.time)
    times = [n0.time]
    rhos = [n0.mass_rho]
    states = [n0]
    if n0.mass_rho < config.extinction_threshold:
        return Trajectory("Extinct", 0, np.array(times), np.array(rhos), states)

    work = prop.to_working(n0.density)
    prev = np.array(n0.density)
    rho_buf = np.empty(spp)
    verdict = "Undecided"
    change = np.nan
    t = n0.time
    for period in range(1, config.max_periods + 1):
        prop.sweep_nonlocal(work, j0, spp, rho_buf, start_time=t)
        times.extend(t + (np.arange(1, spp + 1)) * prop.dt)
        rhos.extend(rho_buf)
        t = n0.time + period * T
        dens = prop.from_working(work)
        state = PdeState.from_density(grid, t, dens)
        states.append(state)
        change = float(np.abs(dens - prev).max())
        prev = dens
        log.debug("period %d: rho=%.6g change=%.3g", period, state.mass_rho, change)
        if state.mass_rho < config.extinction_threshold:
            verdict = "Extinct"
            break
        # the relative test keeps a slowly decaying profile from passing as periodic
        if change < config.periodic_tolerance and change < config.periodic_tolerance * float(dens.max()):
            verdict = "Periodic"
            break

    traj = Trajectory(verdict, period, np.array(times), np.array(rhos), states, last_change=change)
    if verdict == "Periodic":
        stride = config.cycle_stride
        nsnap = spp // stride
        cycle = np.empty((nsnap + 1, grid.n_points))
        cycle[0] = prev
        cyc_work = work.copy()
        buf = np.empty(stride)
        for s in range(nsnap):
            prop.sweep_nonlocal(cyc_work, j0 + s * stride, stride, buf, start_time=t + s * stride * prop.dt)
            cycle[s + 1] = prop.from_working(cyc_work)
        traj.cycle = cycle
        traj.cycle_times = t + np.arange(nsnap + 1) * stride * prop.dt
    traj.diagnostics = {
        "backend": prop.backend.name,
        "liouville": prop.use_liouville,
        "upwind": prop.upwind,
        "dt": prop.dt,
    }
    return traj


def evolve_linear(m0, model: GrowthRateModel, sigma: float, c_tilde: float, grid: Grid1D,
                  steps_per_period: int, n_periods: int, use_liouville: bool = False,
                  propagator: Optional[Propagator] = None) -> np.ndarray:
    """Linear solution after ``n_periods`` whole periods, one row per period boundary."""
    prop = propagator or Propagator(model, sigma, c_tilde, grid, steps_per_period, use_liouville)
    work = prop.to_working(m0)
    out = np.empty((n_periods + 1, grid.n_points))
    out[0] = m0
    for p in range(1, n_periods + 1):
        prop.sweep_linear(work, 0, prop.steps_per_period)
        out[p] = prop.from_working(work)
    return out
