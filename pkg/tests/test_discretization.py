import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import solve_banded

from evoshift.discretization import advection_diffusion_operator, build_grid, integrate, peclet
from evoshift.errors import InvalidGrid
from evoshift.kernels import get_backend


def test_tiny_grid_nodes():
    g = build_grid(1.0, 3, min_points=3)
    assert list(g.nodes) == [-1.0, 0.0, 1.0]
    assert g.dx == 1.0
    assert list(g.weights) == [0.5, 1.0, 0.5]


@pytest.mark.parametrize("R,n", [(6.0, 8), (0.0, 129), (-1.0, 129), (6.0, 100.5)])
def test_invalid_grids(R, n):
    with pytest.raises(InvalidGrid):
        build_grid(R, n)


def test_nodes_are_mirror_symmetric():
    g = build_grid(6.0, 2049)
    assert np.array_equal(g.nodes, -g.nodes[::-1])
    assert g.nodes[1024] == 0.0
    with pytest.raises(ValueError):
        g.nodes[0] = 1.0


def test_gaussian_integral():
    g = build_grid(8.0, 4097)
    assert integrate(g, np.exp(-g.nodes ** 2)) == pytest.approx(np.sqrt(np.pi), abs=1e-12)


def test_integrate_batches():
    g = build_grid(2.0, 65)
    rows = np.vstack([np.ones(65), 2 * np.ones(65)])
    assert np.allclose(integrate(g, rows), [4.0, 8.0])


def test_operator_on_sine_interior():
    g = build_grid(1.0, 257)
    k = np.pi
    u = np.sin(k * g.nodes)
    drift, diff = 0.3, 0.2
    op = advection_diffusion_operator(g, drift, diff)
    assert not op.upwind
    # central stencil: exact symbol of the discrete operator on a Fourier mode
    lam2 = -4.0 / g.dx ** 2 * np.sin(k * g.dx / 2) ** 2
    lam1 = np.sin(k * g.dx) / g.dx
    expected = diff * lam2 * u + drift * lam1 * np.cos(k * g.nodes)
    out = op.apply(u)
    assert np.allclose(out[1:-1], expected[1:-1], atol=1e-12)
    assert out[0] == out[-1] == 0.0
    # and this is second-order close to the continuous drift*u' + diff*u''
    cont = drift * k * np.cos(k * g.nodes) - diff * k ** 2 * u
    assert np.abs(out - cont)[1:-1].max() < 3e-4


def test_peclet_switch():
    g = build_grid(1.0, 65)
    dx = g.dx
    sigma = 1e-3
    below = 0.99 * 2 * sigma / dx
    above = 1.01 * 2 * sigma / dx
    assert peclet(dx, below, sigma) < 1 <= peclet(dx, above, sigma)
    assert not advection_diffusion_operator(g, below, sigma).upwind
    op = advection_diffusion_operator(g, above, sigma)
    assert op.upwind
    # upwind operator is an M-matrix: nonnegative off-diagonals
    assert (op.lower[1:-1] >= 0).all() and (op.upper[1:-1] >= 0).all()
    op_neg = advection_diffusion_operator(g, -above, sigma)
    assert (op_neg.lower[1:-1] >= 0).all() and (op_neg.upper[1:-1] >= 0).all()


def test_operator_annihilates_constants_in_interior():
    g = build_grid(1.0, 65)
    for drift in (0.0, 0.5, 100.0, -100.0):
        out = advection_diffusion_operator(g, drift, 0.1).apply(np.ones(65))
        assert np.allclose(out[1:-1], 0.0, atol=1e-9)


def test_dense_matches_apply():
    g = build_grid(1.0, 65)
    op = advection_diffusion_operator(g, 0.4, 0.05, reaction=np.cos(g.nodes))
    u = np.random.default_rng(0).normal(size=65)
    assert np.allclose(op.dense() @ u, op.apply(u))


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(3, 60),
    seed=st.integers(0, 2 ** 31 - 1),
    name=st.sampled_from(["python", "compiled"]),
)
def test_thomas_solve_matches_dense(n, seed, name):
    rng = np.random.default_rng(seed)
    a = rng.uniform(-1, 0, n)
    c = rng.uniform(-1, 0, n)
    b = 2.5 + rng.uniform(0, 1, n)
    d = rng.normal(size=n)
    be = get_backend(name)
    x = be.solve(be.factor(a, b, c), d.copy())
    ab = np.zeros((3, n))
    ab[0, 1:] = c[:-1]
    ab[1] = b
    ab[2, :-1] = a[1:]
    assert np.allclose(x, solve_banded((1, 1), ab, d), rtol=1e-10, atol=1e-12)
