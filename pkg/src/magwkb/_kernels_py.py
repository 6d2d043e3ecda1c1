"""Pure numpy fallback for the tridiagonal kernels.

Bisection is replaced by multisection: each sweep evaluates the Sturm count
at many shifts at once, so the Python loop runs over matrix rows only.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

PIVMIN = 1e-300
_NPROBE = 64


def _counts(d: np.ndarray, e2: np.ndarray, xs: np.ndarray) -> np.ndarray:
    q = d[0] - xs
    c = (q < 0).astype(np.int64)
    for i in range(1, d.shape[0]):
        q = np.where(np.abs(q) < PIVMIN, np.copysign(PIVMIN, q), q)
        q = d[i] - xs - e2[i - 1] / q
        c += q < 0
    return c


def sturm_count(d, e2, x):
    return int(_counts(np.asarray(d), np.asarray(e2), np.array([float(x)]))[0])


def bisect(d, e2, lo_index, hi_index, lower, upper, tol):
    d = np.asarray(d, dtype=float)
    e2 = np.asarray(e2, dtype=float)
    m = hi_index - lo_index
    targets = lo_index + np.arange(m)
    a = np.full(m, float(lower))
    b = np.full(m, float(upper))
    frac = np.linspace(0.0, 1.0, _NPROBE + 2)[1:-1]
    while np.any(b - a > tol):
        active = np.nonzero(b - a > tol)[0]
        probes = a[active, None] + (b - a)[active, None] * frac[None, :]
        flat = np.unique(probes.ravel())
        cnt = _counts(d, e2, flat)
        pc = cnt[np.searchsorted(flat, probes)]
        for row, j in enumerate(active):
            above = pc[row] > targets[j]
            if above.any():
                k = int(np.argmax(above))
                nb = probes[row, k]
                na = probes[row, k - 1] if k > 0 else a[j]
            else:
                na, nb = probes[row, -1], b[j]
            if na == a[j] and nb == b[j]:
                b[j] = a[j]
            else:
                a[j], b[j] = na, nb
    return 0.5 * (a + b)


def inverse_iteration(d, e, lam, v0, against, max_iter, tol):
    d = np.asarray(d, dtype=float)
    e = np.asarray(e, dtype=float)
    n = d.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = e
    ab[1] = d - lam
    ab[2, :-1] = e
    against = np.asarray(against, dtype=float).reshape(-1, n)
    x = np.array(v0, dtype=float)
    res = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        x -= against.T @ (against @ x)
        x /= np.linalg.norm(x)
        x = solve_banded((1, 1), ab, x, check_finite=False)
        x /= np.linalg.norm(x)
        x -= against.T @ (against @ x)
        x /= np.linalg.norm(x)
        r = (d - lam) * x
        r[1:] += e * x[:-1]
        r[:-1] += e * x[1:]
        res = float(np.linalg.norm(r))
        if res <= tol:
            break
    return x, it, res
