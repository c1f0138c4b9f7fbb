# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled ADMM iteration loop; hot kernel behind the QP solver.

Same contract as _qpcore_py.run_admm.  The C-contiguous (m, n) constraint
matrix is handed to BLAS as its column-major transpose, and the row-major
lower Cholesky factor is addressed as an upper factor with swapped trans.
"""

import numpy as np

from libc.math cimport fabs
from scipy.linalg.cython_blas cimport dgemv, dtrsv


def run_admm(double[::1] P_diag, double[::1] q, double[:, ::1] A, double[:, ::1] L,
             double[::1] rho, double sigma, double alpha,
             double[::1] l, double[::1] u,
             double[::1] x, double[::1] z, double[::1] y,
             int max_iter, int check_every, double eps_abs, double eps_rel):
    cdef int n = x.shape[0]
    cdef int m = z.shape[0]
    cdef double[::1] xt = np.empty(n)
    cdef double[::1] tmp_n = np.empty(n)
    cdef double[::1] tmp_m = np.empty(m)
    cdef double[::1] ax = np.empty(m)

    cdef char uplo = b'U'
    cdef char trans_n = b'N'
    cdef char trans_t = b'T'
    cdef char diag = b'N'
    cdef int inc = 1
    cdef double one = 1.0
    cdef double zero = 0.0

    cdef int it = 0
    cdef int converged = 0
    cdef int i
    cdef double w, v, rp, rd, eps_p, eps_d
    cdef double n_ax, n_z, n_px, n_q, n_aty

    rp = rd = np.inf
    n_q = 0.0
    for i in range(n):
        v = fabs(q[i])
        if v > n_q:
            n_q = v

    with nogil:
        while it < max_iter:
            it += 1
            # rhs = A'(rho*z - y) + sigma*x - q
            for i in range(m):
                tmp_m[i] = rho[i] * z[i] - y[i]
            dgemv(&trans_n, &n, &m, &one, &A[0, 0], &n, &tmp_m[0], &inc, &zero, &xt[0], &inc)
            for i in range(n):
                xt[i] += sigma * x[i] - q[i]
            # solve (L L') xt = rhs
            dtrsv(&uplo, &trans_t, &diag, &n, &L[0, 0], &n, &xt[0], &inc)
            dtrsv(&uplo, &trans_n, &diag, &n, &L[0, 0], &n, &xt[0], &inc)
            # zt = A xt (into ax)
            dgemv(&trans_t, &n, &m, &one, &A[0, 0], &n, &xt[0], &inc, &zero, &ax[0], &inc)
            for i in range(n):
                x[i] = alpha * xt[i] + (1.0 - alpha) * x[i]
            for i in range(m):
                w = alpha * ax[i] + (1.0 - alpha) * z[i] + y[i] / rho[i]
                v = w
                if v < l[i]:
                    v = l[i]
                if v > u[i]:
                    v = u[i]
                z[i] = v
                y[i] = rho[i] * (w - v)

            if it % check_every == 0 or it == max_iter:
                dgemv(&trans_t, &n, &m, &one, &A[0, 0], &n, &x[0], &inc, &zero, &ax[0], &inc)
                dgemv(&trans_n, &n, &m, &one, &A[0, 0], &n, &y[0], &inc, &zero, &tmp_n[0], &inc)
                rp = 0.0
                n_ax = 0.0
                n_z = 0.0
                for i in range(m):
                    v = fabs(ax[i] - z[i])
                    if v > rp:
                        rp = v
                    v = fabs(ax[i])
                    if v > n_ax:
                        n_ax = v
                    v = fabs(z[i])
                    if v > n_z:
                        n_z = v
                rd = 0.0
                n_px = 0.0
                n_aty = 0.0
                for i in range(n):
                    w = P_diag[i] * x[i]
                    v = fabs(w)
                    if v > n_px:
                        n_px = v
                    v = fabs(tmp_n[i])
                    if v > n_aty:
                        n_aty = v
                    v = fabs(w + q[i] + tmp_n[i])
                    if v > rd:
                        rd = v
                eps_p = eps_abs + eps_rel * (n_ax if n_ax > n_z else n_z)
                v = n_px if n_px > n_q else n_q
                if n_aty > v:
                    v = n_aty
                eps_d = eps_abs + eps_rel * v
                if rp <= eps_p and rd <= eps_d:
                    converged = 1
                    break

    return converged, it, rp, rd
