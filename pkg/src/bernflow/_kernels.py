"""Hot numeric kernels with an optional numba-compiled fast path.

The pure-numpy implementations are the reference; setting the environment
variable ``BERNFLOW_NO_NUMBA=1`` (before import) forces them.  Both paths
produce identical results up to floating-point associativity.
"""

import os

import numpy as np

USE_NUMBA = os.environ.get("BERNFLOW_NO_NUMBA", "0").lower() not in ("1", "true", "yes")

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        USE_NUMBA = False

__all__ = [
    "USE_NUMBA",
    "basis_matrix",
    "decasteljau_1d",
    "solve_monotone_batch",
    "solve_monotone_rows",
]


def _basis_matrix_np(u, d):
    # Bernstein basis values phi_j^d(u) for all j, by the de Casteljau-style
    # recurrence; no binomial coefficients, stable for any degree.
    n = u.shape[0]
    out = np.zeros((n, d + 1))
    out[:, 0] = 1.0
    for k in range(1, d + 1):
        prev = out[:, :k].copy()
        out[:, :k + 1] = 0.0
        out[:, 1:k + 1] += prev * u[:, None]
        out[:, :k] += prev * (1.0 - u[:, None])
    return out


def _decasteljau_1d_np(coeffs, u):
    c = coeffs.copy()
    for k in range(c.shape[0] - 1, 0, -1):
        c = (1.0 - u) * c[:k] + u * c[1:k + 1]
    return c[0]


def _solve_monotone_batch_np(g_coeffs, dg_coeffs, z, bisect_tol, newton_tol):
    out = np.empty_like(z)
    for i in range(z.shape[0]):
        out[i] = _solve_monotone_scalar_np(g_coeffs, dg_coeffs, z[i], bisect_tol, newton_tol)
    return out


def _solve_monotone_scalar_np(g_coeffs, dg_coeffs, z, bisect_tol, newton_tol):
    lo, hi = 0.0, 1.0
    while hi - lo > bisect_tol:
        mid = 0.5 * (lo + hi)
        if _decasteljau_1d_np(g_coeffs, mid) < z:
            lo = mid
        else:
            hi = mid
    u = 0.5 * (lo + hi)
    for _ in range(50):
        r = _decasteljau_1d_np(g_coeffs, u) - z
        if abs(r) < newton_tol:
            break
        dg = _decasteljau_1d_np(dg_coeffs, u)
        if dg <= 0.0:
            break
        step = r / dg
        u -= step
        if u < lo or u > hi:
            u = 0.5 * (lo + hi)
            break
    if u < 0.0:
        u = 0.0
    elif u > 1.0:
        u = 1.0
    return u


def _solve_monotone_rows_np(g_rows, dg_rows, z, bisect_tol, newton_tol):
    out = np.empty_like(z)
    for i in range(z.shape[0]):
        out[i] = _solve_monotone_scalar_np(g_rows[i], dg_rows[i], z[i], bisect_tol, newton_tol)
    return out


if USE_NUMBA:

    @njit(cache=True)
    def _basis_matrix_nb(u, d):  # pragma: no cover - exercised via dispatch
        n = u.shape[0]
        out = np.zeros((n, d + 1))
        out[:, 0] = 1.0
        for i in range(n):
            ui = u[i]
            for k in range(1, d + 1):
                out[i, k] = ui * out[i, k - 1]
                for j in range(k - 1, 0, -1):
                    out[i, j] = ui * out[i, j - 1] + (1.0 - ui) * out[i, j]
                out[i, 0] = (1.0 - ui) * out[i, 0]
        return out

    @njit(cache=True)
    def _decasteljau_1d_nb(coeffs, u):  # pragma: no cover
        m = coeffs.shape[0]
        c = coeffs.copy()
        for k in range(m - 1, 0, -1):
            for j in range(k):
                c[j] = (1.0 - u) * c[j] + u * c[j + 1]
        return c[0]

    @njit(cache=True)
    def _solve_monotone_batch_nb(g_coeffs, dg_coeffs, z, bisect_tol, newton_tol):  # pragma: no cover
        out = np.empty_like(z)
        for i in range(z.shape[0]):
            zi = z[i]
            lo, hi = 0.0, 1.0
            while hi - lo > bisect_tol:
                mid = 0.5 * (lo + hi)
                if _decasteljau_1d_nb(g_coeffs, mid) < zi:
                    lo = mid
                else:
                    hi = mid
            u = 0.5 * (lo + hi)
            for _ in range(50):
                r = _decasteljau_1d_nb(g_coeffs, u) - zi
                if abs(r) < newton_tol:
                    break
                dg = _decasteljau_1d_nb(dg_coeffs, u)
                if dg <= 0.0:
                    break
                u -= r / dg
                if u < lo or u > hi:
                    u = 0.5 * (lo + hi)
                    break
            if u < 0.0:
                u = 0.0
            elif u > 1.0:
                u = 1.0
            out[i] = u
        return out

    @njit(cache=True)
    def _solve_monotone_rows_nb(g_rows, dg_rows, z, bisect_tol, newton_tol):  # pragma: no cover
        out = np.empty_like(z)
        for i in range(z.shape[0]):
            zi = z[i]
            g = g_rows[i]
            dg = dg_rows[i]
            lo, hi = 0.0, 1.0
            while hi - lo > bisect_tol:
                mid = 0.5 * (lo + hi)
                if _decasteljau_1d_nb(g, mid) < zi:
                    lo = mid
                else:
                    hi = mid
            u = 0.5 * (lo + hi)
            for _ in range(50):
                r = _decasteljau_1d_nb(g, u) - zi
                if abs(r) < newton_tol:
                    break
                dgu = _decasteljau_1d_nb(dg, u)
                if dgu <= 0.0:
                    break
                u -= r / dgu
                if u < lo or u > hi:
                    u = 0.5 * (lo + hi)
                    break
            if u < 0.0:
                u = 0.0
            elif u > 1.0:
                u = 1.0
            out[i] = u
        return out

    def basis_matrix(u, d):
        return _basis_matrix_nb(np.ascontiguousarray(u, dtype=np.float64), d)

    def decasteljau_1d(coeffs, u):
        return _decasteljau_1d_nb(np.ascontiguousarray(coeffs, dtype=np.float64), float(u))

    def solve_monotone_batch(g_coeffs, dg_coeffs, z, bisect_tol=1e-6, newton_tol=1e-10):
        return _solve_monotone_batch_nb(
            np.ascontiguousarray(g_coeffs, dtype=np.float64),
            np.ascontiguousarray(dg_coeffs, dtype=np.float64),
            np.ascontiguousarray(z, dtype=np.float64),
            bisect_tol,
            newton_tol,
        )

    def solve_monotone_rows(g_rows, dg_rows, z, bisect_tol=1e-6, newton_tol=1e-10):
        return _solve_monotone_rows_nb(
            np.ascontiguousarray(g_rows, dtype=np.float64),
            np.ascontiguousarray(dg_rows, dtype=np.float64),
            np.ascontiguousarray(z, dtype=np.float64),
            bisect_tol,
            newton_tol,
        )

else:

    def basis_matrix(u, d):
        return _basis_matrix_np(np.asarray(u, dtype=np.float64), d)

    def decasteljau_1d(coeffs, u):
        return _decasteljau_1d_np(np.asarray(coeffs, dtype=np.float64), float(u))

    def solve_monotone_batch(g_coeffs, dg_coeffs, z, bisect_tol=1e-6, newton_tol=1e-10):
        return _solve_monotone_batch_np(
            np.asarray(g_coeffs, dtype=np.float64),
            np.asarray(dg_coeffs, dtype=np.float64),
            np.asarray(z, dtype=np.float64),
            bisect_tol,
            newton_tol,
        )

    def solve_monotone_rows(g_rows, dg_rows, z, bisect_tol=1e-6, newton_tol=1e-10):
        return _solve_monotone_rows_np(
            np.asarray(g_rows, dtype=np.float64),
            np.asarray(dg_rows, dtype=np.float64),
            np.asarray(z, dtype=np.float64),
            bisect_tol,
            newton_tol,
        )
