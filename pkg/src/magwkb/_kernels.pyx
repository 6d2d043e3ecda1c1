# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled tridiagonal kernels: Sturm counts, bisection, inverse iteration."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()

cdef double PIVMIN = 1e-300


cdef Py_ssize_t _count(const double[::1] d, const double[::1] e2, double x) noexcept nogil:
    cdef Py_ssize_t i, n = d.shape[0], c = 0
    cdef double q = d[0] - x
    if q < 0.0:
        c += 1
    for i in range(1, n):
        if fabs(q) < PIVMIN:
            q = -PIVMIN if q < 0.0 else PIVMIN
        q = d[i] - x - e2[i - 1] / q
        if q < 0.0:
            c += 1
    return c


def sturm_count(double[::1] d, double[::1] e2, double x):
    """Number of eigenvalues strictly below ``x``."""
    return _count(d, e2, x)


def bisect(double[::1] d, double[::1] e2, Py_ssize_t lo_index, Py_ssize_t hi_index,
           double lower, double upper, double tol):
    """Eigenvalues with indices ``lo_index..hi_index-1`` by bisection."""
    cdef Py_ssize_t m = hi_index - lo_index, j, c
    cdef double a, b, mid
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] ov = out
    with nogil:
        for j in range(m):
            a = lower
            b = upper
            if j > 0 and ov[j - 1] > a:
                a = ov[j - 1] - tol
            while b - a > tol:
                mid = 0.5 * (a + b)
                if mid == a or mid == b:
                    break
                c = _count(d, e2, mid)
                if c > lo_index + j:
                    b = mid
                else:
                    a = mid
            ov[j] = 0.5 * (a + b)
    return out


cdef void _lu_solve(const double[::1] d, const double[::1] e, double lam,
                    double[::1] x, double[::1] dl, double[::1] du, double[::1] du2,
                    double[::1] dd, Py_ssize_t[::1] ipiv, bint factor) noexcept nogil:
    # gttrf/gttrs with partial pivoting on T - lam I; in-place solve on x
    cdef Py_ssize_t n = d.shape[0], i
    cdef double fact, temp
    if factor:
        for i in range(n):
            dd[i] = d[i] - lam
        for i in range(n - 1):
            dl[i] = e[i]
            du[i] = e[i]
            du2[i] = 0.0
        for i in range(n - 1):
            if fabs(dd[i]) >= fabs(dl[i]):
                ipiv[i] = i
                if fabs(dd[i]) < PIVMIN:
                    dd[i] = PIVMIN
                fact = dl[i] / dd[i]
                dl[i] = fact
                dd[i + 1] = dd[i + 1] - fact * du[i]
            else:
                ipiv[i] = i + 1
                fact = dd[i] / dl[i]
                dd[i] = dl[i]
                dl[i] = fact
                temp = du[i]
                du[i] = dd[i + 1]
                dd[i + 1] = temp - fact * dd[i + 1]
                if i < n - 2:
                    du2[i] = du[i + 1]
                    du[i + 1] = -fact * du[i + 1]
        if fabs(dd[n - 1]) < PIVMIN:
            dd[n - 1] = PIVMIN
    for i in range(n - 1):
        if ipiv[i] == i:
            x[i + 1] = x[i + 1] - dl[i] * x[i]
        else:
            temp = x[i]
            x[i] = x[i + 1]
            x[i + 1] = temp - dl[i] * x[i + 1]
    x[n - 1] = x[n - 1] / dd[n - 1]
    if n > 1:
        x[n - 2] = (x[n - 2] - du[n - 2] * x[n - 1]) / dd[n - 2]
    for i in range(n - 3, -1, -1):
        x[i] = (x[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / dd[i]


def inverse_iteration(double[::1] d, double[::1] e, double lam, double[::1] v0,
                      double[:, ::1] against, Py_ssize_t max_iter, double tol):
    """Inverse iteration for the eigenvector of ``lam``.

    Rows of ``against`` are orthonormal vectors to project out (cluster
    members already computed).  Returns ``(vector, iterations, residual)``.
    """
    cdef Py_ssize_t n = d.shape[0], it, i, r, nr = against.shape[0]
    dl = np.empty(max(n - 1, 1)); du = np.empty(max(n - 1, 1))
    du2 = np.empty(max(n - 1, 1)); dd = np.empty(n)
    ipiv = np.empty(max(n - 1, 1), dtype=np.intp)
    x = np.array(v0, dtype=np.float64, copy=True)
    cdef double[::1] xv = x
    cdef double nrm, dot, res = 0.0, tmp
    cdef bint factor = True
    it = 0
    for it in range(1, max_iter + 1):
        for r in range(nr):
            dot = 0.0
            for i in range(n):
                dot += against[r, i] * xv[i]
            for i in range(n):
                xv[i] -= dot * against[r, i]
        nrm = 0.0
        for i in range(n):
            nrm += xv[i] * xv[i]
        nrm = sqrt(nrm)
        for i in range(n):
            xv[i] /= nrm
        y = x.copy()
        _lu_solve(d, e, lam, y, dl, du, du2, dd, ipiv, factor)
        factor = False
        x = y
        xv = x
        nrm = 0.0
        for i in range(n):
            nrm += xv[i] * xv[i]
        nrm = sqrt(nrm)
        for i in range(n):
            xv[i] /= nrm
        for r in range(nr):
            dot = 0.0
            for i in range(n):
                dot += against[r, i] * xv[i]
            for i in range(n):
                xv[i] -= dot * against[r, i]
        nrm = 0.0
        for i in range(n):
            nrm += xv[i] * xv[i]
        nrm = sqrt(nrm)
        for i in range(n):
            xv[i] /= nrm
        res = 0.0
        for i in range(n):
            tmp = (d[i] - lam) * xv[i]
            if i > 0:
                tmp += e[i - 1] * xv[i - 1]
            if i < n - 1:
                tmp += e[i] * xv[i + 1]
            res += tmp * tmp
        res = sqrt(res)
        if res <= tol:
            break
    return x, it, res
