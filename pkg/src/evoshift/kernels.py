"""Backend selection for the time-stepping kernels.

Two interchangeable backends implement the same four functions
(``factor``, ``solve``, ``linear_sweep``, ``nonlocal_sweep``):

* ``compiled``: the Cython extension ``evoshift._kernels``;
* ``python``: numpy loops over LAPACK's tridiagonal ``gttrf``/``gttrs``.

The compiled one is used when importable. ``EVOSHIFT_BACKEND=python``
forces the fallback.
"""
from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np
from scipy.linalg import lapack

STATUS_OK = 0
STATUS_REJECTED = 1


def _py_factor(a, b, c):
    dl, d, du, du2, ipiv, info = lapack.dgttrf(
        np.ascontiguousarray(a[1:], dtype=float),
        np.ascontiguousarray(b, dtype=float),
        np.ascontiguousarray(c[:-1], dtype=float),
    )
    if info != 0:
        raise np.linalg.LinAlgError(f"dgttrf failed with info={info}")
    return (dl, d, du, du2, ipiv)


def _py_solve(fac, d):
    x, info = lapack.dgttrs(*fac, d)
    if info != 0:
        raise np.linalg.LinAlgError(f"dgttrs failed with info={info}")
    d[:] = x
    return d


def _py_linear_sweep(u, E, j0, nsteps, fac, store=None):
    rows = E.shape[0]
    for k in range(nsteps):
        u[:] = lapack.dgttrs(*fac, u * E[(j0 + k) % rows])[0]
        u[0] = u[-1] = 0.0  # pivoting can leave round-off on the pinned rows
        if store is not None:
            store[k] = u
    return u


def _py_nonlocal_sweep(u, E, j0, nsteps, fac, w, dt, rho_out, max_rel_change=0.5):
    rows = E.shape[0]
    rho0 = float(w @ u)
    worst = 0.0
    for k in range(nsteps):
        lin = lapack.dgttrs(*fac, u * E[(j0 + k) % rows])[0]
        lin[0] = lin[-1] = 0.0
        neg = lin < 0.0
        if neg.any():
            worst = max(worst, float(-(w[neg] @ lin[neg])))
            lin[neg] = 0.0
        rho1 = float(w @ lin)
        lin *= 1.0 / (1.0 + 0.5 * dt * (rho0 + rho1))
        rho_new = float(w @ lin)
        if abs(rho_new - rho0) > max_rel_change * rho0:
            return STATUS_REJECTED, k, worst
        u[:] = lin
        rho_out[k] = rho_new
        rho0 = rho_new
    return STATUS_OK, nsteps, worst


python_backend = SimpleNamespace(
    name="python",
    factor=_py_factor,
    solve=_py_solve,
    linear_sweep=_py_linear_sweep,
    nonlocal_sweep=_py_nonlocal_sweep,
)

try:
    from . import _kernels
except ImportError:  # extension not built
    compiled_backend = None
else:
    compiled_backend = SimpleNamespace(
        name="compiled",
        factor=_kernels.factor,
        solve=_kernels.solve,
        linear_sweep=_kernels.linear_sweep,
        nonlocal_sweep=_kernels.nonlocal_sweep,
    )


def get_backend(name: str | None = None):
    """Return a backend by name (``"compiled"``, ``"python"``, or ``None`` for the default)."""
    name = name or os.environ.get("EVOSHIFT_BACKEND", "").strip().lower() or None
    if name in (None, "auto"):
        return compiled_backend or python_backend
    if name == "python":
        return python_backend
    if name == "compiled":
        if compiled_backend is None:
            raise ImportError("compiled kernels are not built; reinstall with Cython available")
        return compiled_backend
    raise ValueError(f"unknown backend {name!r}")


backend = get_backend()
