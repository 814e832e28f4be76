"""Uniform trait grid, trapezoid quadrature and three-point stencils."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidGrid

MIN_POINTS = 64


@dataclass(frozen=True)
class Grid1D:
    R: float
    n_points: int
    dx: float
    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.nodes.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def interior(self) -> slice:
        return slice(1, self.n_points - 1)


def build_grid(R: float, n_points: int, min_points: int = MIN_POINTS) -> Grid1D:
    """Uniform grid on ``[-R, R]`` with ``n_points`` nodes (endpoints included).

    ``min_points`` only exists so tiny illustrative grids can be built in
    tests; solvers always go through the default.
    """
    if not R > 0:
        raise InvalidGrid(f"R must be positive, got {R}")
    if int(n_points) != n_points or n_points < max(3, min_points):
        raise InvalidGrid(f"n_points must be an integer >= {max(3, min_points)}, got {n_points}")
    n_points = int(n_points)
    nodes = np.linspace(-R, R, n_points)
    nodes = 0.5 * (nodes - nodes[::-1])  # exact mirror symmetry
    dx = 2.0 * R / (n_points - 1)
    w = np.full(n_points, dx)
    w[0] = w[-1] = 0.5 * dx
    return Grid1D(R=float(R), n_points=n_points, dx=dx, nodes=nodes, weights=w)


def integrate(grid: Grid1D, values) -> float:
    """Trapezoid rule over the grid; ``values`` may carry leading batch axes."""
    return np.asarray(values, dtype=float) @ grid.weights


def peclet(dx: float, drift: float, diffusivity: float) -> float:
    return abs(drift) * dx / (2.0 * diffusivity)


@dataclass(frozen=True)
class TridiagonalOperator:
    """Three-point stencil ``(L u)_i = lower_i u_{i-1} + diag_i u_i + upper_i u_{i+1}``.

    Boundary rows are identically zero (homogeneous Dirichlet): the boundary
    values are pinned, not evolved. ``lower[0]`` and ``upper[-1]`` are unused.
    """

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    upwind: bool = False

    def __len__(self):
        return self.diag.size

    def apply(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        out = self.diag * u
        out[1:] += self.lower[1:] * u[:-1]
        out[:-1] += self.upper[:-1] * u[1:]
        out[0] = out[-1] = 0.0
        return out

    def implicit_matrix(self, dt: float):
        """Coefficients of ``I - dt*L`` with identity rows on the boundary."""
        a = -dt * self.lower
        b = 1.0 - dt * self.diag
        c = -dt * self.upper
        a[0] = c[0] = 0.0
        a[-1] = c[-1] = 0.0
        b[0] = b[-1] = 1.0
        return a, b, c

    def dense(self) -> np.ndarray:
        n = self.diag.size
        m = np.diag(self.diag) + np.diag(self.upper[:-1], 1) + np.diag(self.lower[1:], -1)
        m[0, :] = 0.0
        m[-1, :] = 0.0
        return m


def advection_diffusion_operator(grid: Grid1D, drift: float, diffusivity: float,
                                 reaction=0.0) -> TridiagonalOperator:
    """Discretize ``diffusivity * u'' + drift * u' + reaction * u``.

    Central differences for the drift while the cell Peclet number stays
    below one; otherwise one-sided differences taken from the upwind side
    (the drift term transports mass towards ``-sign(drift)``).
    """
    if not diffusivity > 0:
        raise ValueError("diffusivity must be positive")
    n, dx = grid.n_points, grid.dx
    d = diffusivity / dx ** 2
    lower = np.full(n, d)
    upper = np.full(n, d)
    diag = np.full(n, -2.0 * d) + np.broadcast_to(np.asarray(reaction, dtype=float), (n,))
    upwind = peclet(dx, drift, diffusivity) >= 1.0
    if not upwind:
        lower -= drift / (2.0 * dx)
        upper += drift / (2.0 * dx)
    elif drift > 0:
        upper += drift / dx
        diag -= drift / dx
    else:
        lower -= drift / dx
        diag += drift / dx
    lower[0] = upper[-1] = 0.0
    lower[-1] = upper[0] = diag[0] = diag[-1] = 0.0
    return TridiagonalOperator(lower=lower, diag=diag, upper=upper, upwind=bool(upwind))
