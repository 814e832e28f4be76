# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled time-stepping kernels.

The tridiagonal systems come from M-matrices (diagonally dominant with
non-positive off-diagonals), so the Thomas recurrence needs no pivoting and
only ever adds non-negative terms.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()

cdef enum:
    _OK = 0
    _REJECTED = 1

STATUS_OK = _OK
STATUS_REJECTED = _REJECTED


def factor(double[::1] a, double[::1] b, double[::1] c):
    """Thomas factorization; returns ``(a, cp, inv_den)``."""
    cdef Py_ssize_t n = b.shape[0], i
    cdef cnp.ndarray[cnp.float64_t, ndim=1] cp_arr = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] inv_arr = np.empty(n)
    cdef double[::1] cp = cp_arr
    cdef double[::1] inv = inv_arr
    cdef double den
    inv[0] = 1.0 / b[0]
    cp[0] = c[0] * inv[0]
    for i in range(1, n):
        den = b[i] - a[i] * cp[i - 1]
        inv[i] = 1.0 / den
        cp[i] = c[i] * inv[i]
    return (np.asarray(a).copy(), cp_arr, inv_arr)


cdef inline void _solve(double[::1] a, double[::1] cp, double[::1] inv,
                        double[::1] d) noexcept nogil:
    cdef Py_ssize_t n = d.shape[0], i
    d[0] = d[0] * inv[0]
    for i in range(1, n):
        d[i] = (d[i] - a[i] * d[i - 1]) * inv[i]
    for i in range(n - 2, -1, -1):
        d[i] = d[i] - cp[i] * d[i + 1]


def solve(fac, double[::1] d):
    """In-place solve with a factorization from :func:`factor`."""
    cdef double[::1] a = fac[0]
    cdef double[::1] cp = fac[1]
    cdef double[::1] inv = fac[2]
    _solve(a, cp, inv, d)
    return np.asarray(d)


def linear_sweep(double[::1] u, double[:, ::1] E, Py_ssize_t j0, Py_ssize_t nsteps,
                 fac, store=None):
    """``nsteps`` steps of ``u <- (I - dt L)^{-1} (E[j] * u)``, rows of E cycling from ``j0``."""
    cdef double[::1] a = fac[0]
    cdef double[::1] cp = fac[1]
    cdef double[::1] inv = fac[2]
    cdef Py_ssize_t n = u.shape[0], rows = E.shape[0], k, i, j
    cdef double[:, ::1] st
    cdef bint keep = store is not None
    if keep:
        st = store
    with nogil:
        for k in range(nsteps):
            j = (j0 + k) % rows
            for i in range(n):
                u[i] = u[i] * E[j, i]
            _solve(a, cp, inv, u)
            if keep:
                for i in range(n):
                    st[k, i] = u[i]
    return np.asarray(u)


def nonlocal_sweep(double[::1] u, double[:, ::1] E, Py_ssize_t j0, Py_ssize_t nsteps,
                   fac, double[::1] w, double dt, double[::1] rho_out,
                   double max_rel_change=0.5):
    """Nonlocal steps: linear update, then divide by ``1 + dt*(rho_old + rho_lin)/2``.

    Returns ``(status, steps_done, max_clamped_mass)``; on rejection ``u``
    holds the state before the offending step.
    """
    cdef double[::1] a = fac[0]
    cdef double[::1] cp = fac[1]
    cdef double[::1] inv = fac[2]
    cdef Py_ssize_t n = u.shape[0], rows = E.shape[0], k, i, j
    cdef double rho0, rho1, rho_new, scale, neg, worst = 0.0
    cdef cnp.ndarray[cnp.float64_t, ndim=1] save_arr = np.empty(n)
    cdef double[::1] save = save_arr
    cdef int status = _OK
    with nogil:
        rho0 = 0.0
        for i in range(n):
            rho0 += w[i] * u[i]
        for k in range(nsteps):
            j = (j0 + k) % rows
            for i in range(n):
                save[i] = u[i]
                u[i] = u[i] * E[j, i]
            _solve(a, cp, inv, u)
            rho1 = 0.0
            neg = 0.0
            for i in range(n):
                if u[i] < 0.0:
                    neg -= w[i] * u[i]
                    u[i] = 0.0
                rho1 += w[i] * u[i]
            if neg > worst:
                worst = neg
            scale = 1.0 / (1.0 + 0.5 * dt * (rho0 + rho1))
            rho_new = 0.0
            for i in range(n):
                u[i] = u[i] * scale
                rho_new += w[i] * u[i]
            if fabs(rho_new - rho0) > max_rel_change * rho0:
                for i in range(n):
                    u[i] = save[i]
                status = _REJECTED
                break
            rho_out[k] = rho_new
            rho0 = rho_new
    return status, k if status else nsteps, worst
