"""Band functions of the 1D model operators ``D_tau^2 + (zeta - tau^{k+1}/(k+1))^2``.

``k = 0`` lives on the half-line with a Neumann condition at ``tau = 0``
(the de Gennes operator); ``k >= 1`` on the full line.  Both are truncated to
a finite interval with Dirichlet walls at the artificial ends and discretized
by second-order central differences.

Unknowns are the nodes not pinned by a Dirichlet wall.  The Neumann ghost-node
row is not symmetric as written; the similarity ``W^{1/2} T W^{-1/2}`` with the
trapezoid weights ``W = diag(1/2, 1, 1, ...)`` makes it exactly symmetric, and a
Euclidean-normalized eigenvector ``v`` maps to trapezoid-normalized node samples
``u = v / sqrt(W * spacing)``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import minimize_scalar

from .eigensolve import ConvergenceError, tridiag_smallest

__all__ = [
    "Grid1D",
    "Tridiagonal",
    "BandPoint",
    "BandMinimum",
    "default_grid",
    "assemble_band_operator",
    "band_value",
    "band_minimum",
    "band_derivative_fh",
    "band_second_derivative",
    "moment_C1",
    "moment_check_lemma58",
    "band_taylor",
    "band_table",
    "write_band_csv",
    "BracketError",
]

FULL = "full-line"
HALF = "half-line-neumann"


class BracketError(ValueError):
    """The minimizer sits on the bracket boundary."""


@dataclass(frozen=True)
class Grid1D:
    """Uniform node grid ``x_min + i*spacing``, ``i = 0..n-1``."""

    domain_kind: str
    x_min: float
    x_max: float
    n: int

    def __post_init__(self) -> None:
        if self.domain_kind not in (FULL, HALF):
            raise ValueError(f"unknown domain kind {self.domain_kind!r}")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")
        if self.n < 16:
            raise ValueError("need at least 16 nodes")
        if self.domain_kind == HALF and self.x_min != 0.0:
            raise ValueError("half-line grids start at 0")

    @property
    def spacing(self) -> float:
        return (self.x_max - self.x_min) / (self.n - 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.x_min + self.spacing * np.arange(self.n)

    @property
    def interior(self) -> slice:
        """Slice of node indices that are unknowns."""
        return slice(0, self.n - 1) if self.domain_kind == HALF else slice(1, self.n - 1)

    @property
    def sym_weights(self) -> np.ndarray:
        """Trapezoid weights (in units of spacing) of the unknowns."""
        w = np.ones(self.n)[self.interior]
        if self.domain_kind == HALF:
            w[0] = 0.5
        return w

    def trapezoid_weights(self) -> np.ndarray:
        """Full trapezoid weights on all nodes (Dirichlet end values are zero)."""
        w = np.full(self.n, self.spacing)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    def to_dict(self) -> dict:
        return {"domain_kind": self.domain_kind, "x_min": self.x_min,
                "x_max": self.x_max, "n": self.n}


def default_grid(k: int, n: int = 4001) -> Grid1D:
    """Default truncation: ``[0, 20]`` for ``k = 0``, ``[-15, 15]`` otherwise."""
    if k == 0:
        return Grid1D(HALF, 0.0, 20.0, n)
    return Grid1D(FULL, -15.0, 15.0, n)


def _check_pair(k: int, grid: Grid1D) -> None:
    if k < 0:
        raise ValueError("k must be non-negative")
    if k == 0 and grid.domain_kind != HALF:
        raise ValueError("k = 0 needs a half-line-neumann grid")
    if k >= 1 and grid.domain_kind != FULL:
        raise ValueError("k >= 1 needs a full-line grid")


def _profile(k: int, tau: np.ndarray) -> np.ndarray:
    return tau ** (k + 1) / (k + 1)


@dataclass
class Tridiagonal:
    """Symmetric tridiagonal matrix on the unknowns of ``grid``."""

    diag: np.ndarray
    off: np.ndarray
    grid: Grid1D
    potential: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.diag.shape[0])

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.off, 1) + np.diag(self.off, -1)

    def to_sparse(self) -> sp.csr_matrix:
        return sp.diags([self.off, self.diag, self.off], [-1, 0, 1], format="csr")

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * v
        out[1:] += self.off * v[:-1]
        out[:-1] += self.off * v[1:]
        return out

    def nodal(self, v: np.ndarray) -> np.ndarray:
        """Node samples on the full grid from a vector on the unknowns."""
        u = np.zeros(self.grid.n, dtype=np.result_type(v, float))
        u[self.grid.interior] = v / np.sqrt(self.grid.sym_weights * self.grid.spacing)
        return u

    def unknowns(self, u: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`nodal`."""
        return u[self.grid.interior] * np.sqrt(self.grid.sym_weights * self.grid.spacing)

    def quadratic_form(self, v: np.ndarray) -> float:
        """``v^T T v`` as a sum of non-negative terms (no cancellation)."""
        g = self.grid
        u = v / np.sqrt(g.sym_weights)
        if g.domain_kind == HALF:
            diffs = np.diff(np.append(u, 0.0))
        else:
            diffs = np.diff(np.concatenate(([0.0], u, [0.0])))
        kin = float(np.sum(diffs * diffs)) / g.spacing ** 2
        pot = float(np.sum(g.sym_weights * self.potential * u * u))
        return kin + pot


def assemble_band_operator(k: int, zeta: float, grid: Grid1D) -> Tridiagonal:
    """Finite-difference matrix of the 1D model operator at momentum ``zeta``.

    Parameters
    ----------
    k : int
        Vanishing order; ``k = 0`` requires a half-line-neumann grid.
    zeta : float
        Momentum parameter.
    grid : Grid1D

    Returns
    -------
    Tridiagonal
        Symmetric by construction: the off-diagonal array is shared.
    """
    _check_pair(k, grid)
    tau = grid.nodes[grid.interior]
    pot = (zeta - _profile(k, tau)) ** 2
    if not np.all(np.isfinite(pot)):
        raise ValueError("non-finite potential values")
    h2 = grid.spacing ** 2
    diag = 2.0 / h2 + pot
    off = np.full(tau.shape[0] - 1, -1.0 / h2)
    if grid.domain_kind == HALF:
        off[0] = -math.sqrt(2.0) / h2
    return Tridiagonal(diag=diag, off=off, grid=grid, potential=pot)


@dataclass
class BandPoint:
    """Ground state of the model operator at one momentum."""

    k: int
    zeta: float
    nu: float
    eigenfunction: np.ndarray
    residual: float
    grid: Grid1D

    def to_dict(self) -> dict:
        return {"k": self.k, "zeta": self.zeta, "nu": self.nu, "residual": self.residual}


@dataclass
class BandMinimum:
    """Band minimum ``(zeta0, nu0, nu2)`` with the ground state at ``zeta0``."""

    k: int
    zeta0: float
    nu0: float
    nu2: float
    ground: BandPoint
    C1: float | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"k": self.k, "zeta0": self.zeta0, "nu0": self.nu0, "nu2": self.nu2}
        if self.C1 is not None:
            d["C1"] = self.C1
        return d

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text


def _ground(op: Tridiagonal, tol: float) -> tuple[float, np.ndarray, float]:
    res = tridiag_smallest(op.diag, op.off, 1, tol=tol)
    v = res.eigenvectors[:, 0]
    v = v / np.linalg.norm(v)
    nu = op.quadratic_form(v)
    r = float(np.linalg.norm(op.matvec(v) - nu * v))
    return nu, v, r


def band_value(k: int, zeta: float, grid: Grid1D | None = None, tol: float = 1e-9) -> BandPoint:
    """Lowest eigenvalue ``nu^[k](zeta)`` and its normalized eigenfunction.

    The eigenvalue from bisection is refined by the Rayleigh quotient written
    as a sum of squares, which has full relative accuracy.

    Raises
    ------
    ConvergenceError
        Residual above ``tol * max(1, ||T||)`` after inverse iteration.
    """
    grid = grid or default_grid(k)
    op = assemble_band_operator(k, zeta, grid)
    nu, v, r = _ground(op, tol)
    scale = max(1.0, float(np.max(np.abs(op.diag)) + 2 * np.max(np.abs(op.off))))
    if r > tol * scale:
        raise ConvergenceError(f"band residual {r:.3e} above tolerance")
    u = op.nodal(v)
    if u[int(np.argmax(np.abs(u)))] < 0:
        u = -u
    return BandPoint(k=k, zeta=float(zeta), nu=float(nu), eigenfunction=u, residual=r, grid=grid)


def band_derivative_fh(k: int, point: BandPoint) -> float:
    """Feynman-Hellmann derivative ``2 * int (zeta - p(tau)) u^2`` (trapezoid)."""
    g = point.grid
    tau = g.nodes
    w = g.trapezoid_weights()
    u = point.eigenfunction
    return float(2.0 * np.sum(w * (point.zeta - _profile(k, tau)) * u * u))


def band_second_derivative(k: int, zeta: float, grid: Grid1D | None = None,
                           delta: float = 1e-3) -> float:
    """Five-point central difference of ``nu`` with step ``delta``."""
    grid = grid or default_grid(k)
    f = [band_value(k, zeta + j * delta, grid).nu for j in (-2, -1, 0, 1, 2)]
    return (-f[0] + 16 * f[1] - 30 * f[2] + 16 * f[3] - f[4]) / (12 * delta * delta)


def band_minimum(
    k: int,
    grid: Grid1D | None = None,
    bracket: tuple[float, float] = (0.0, 2.0),
    tol: float = 1e-9,
    delta: float = 1e-3,
) -> BandMinimum:
    """Locate the band minimum.

    Bounded Brent search (golden section with parabolic steps), then two
    Newton steps on the Feynman-Hellmann derivative.  ``nu''`` comes from a
    five-point stencil of step ``delta``.

    Raises
    ------
    BracketError
        The minimizer is on the bracket boundary.
    """
    grid = grid or default_grid(k)
    lo, hi = map(float, bracket)
    r = minimize_scalar(lambda z: band_value(k, z, grid).nu, bounds=(lo, hi),
                        method="bounded", options={"xatol": 1e-7})
    z = float(r.x)
    edge = 1e-5 * (hi - lo)
    if z - lo < edge or hi - z < edge:
        raise BracketError(f"minimizer {z} on the bracket boundary [{lo}, {hi}]")
    nu2 = band_second_derivative(k, z, grid, delta)
    for _ in range(2):
        d1 = band_derivative_fh(k, band_value(k, z, grid))
        z -= d1 / nu2
    nu2 = band_second_derivative(k, z, grid, delta)
    ground = band_value(k, z, grid, tol)
    if not nu2 > 0:
        raise ValueError("degenerate band minimum (nu'' <= 0)")
    bm = BandMinimum(k=k, zeta0=z, nu0=ground.nu, nu2=nu2, ground=ground)
    bm.extra["nu_prime_fh"] = band_derivative_fh(k, ground)
    if k == 0:
        bm.C1 = moment_C1(ground)
    return bm


def moment_C1(ground: BandPoint) -> float:
    """``u(0)^2 / 3`` from the boundary sample of the normalized ground state."""
    if ground.k != 0:
        raise ValueError("moment_C1 is defined for k = 0")
    return float(ground.eigenfunction[0] ** 2 / 3.0)


def _aligned(ref: np.ndarray, u: np.ndarray, w: np.ndarray) -> np.ndarray:
    ov = float(np.sum(w * ref * u))
    if abs(ov) < 0.5:
        raise ValueError("phase alignment failed: eigenfunctions nearly orthogonal")
    return u if ov > 0 else -u


def moment_check_lemma58(ground: BandPoint, delta: float = 1e-4) -> dict[str, float]:
    """Residuals of the four moment identities at the de Gennes minimum.

    Returns a dict with keys ``first``, ``second``, ``third``, ``c1`` (absolute
    residuals) plus the values that enter them.  ``d_zeta u`` is a central
    difference of sign-aligned eigenfunctions at ``zeta0 +- delta``.
    """
    if ground.k != 0:
        raise ValueError("moment identities are for k = 0")
    g = ground.grid
    tau = g.nodes
    w = g.trapezoid_weights()
    z0 = ground.zeta
    u = ground.eigenfunction
    up = _aligned(u, band_value(0, z0 + delta, g).eigenfunction, w)
    um = _aligned(u, band_value(0, z0 - delta, g).eigenfunction, w)
    du = (up - um) / (2 * delta)
    nu2 = band_second_derivative(0, z0, g)
    c1 = moment_C1(ground)
    dtau_u = np.gradient(u, g.spacing, edge_order=2)
    first = float(np.sum(w * (z0 - tau) * u * u))
    second = float(np.sum(w * du * u))
    third = float(2 * np.sum(w * (z0 - tau) * du * u))
    fourth = float(np.sum(w * ((2 * tau * (z0 - tau) ** 2 + tau ** 2 * (z0 - tau)) * u * u
                               + u * dtau_u)))
    return {
        "first": abs(first),
        "second": abs(second),
        "third": abs(third - (nu2 / 2 - 1)),
        "c1": abs(fourth + c1),
        "third_lhs": third,
        "nu2": nu2,
        "c1_integral": -fourth,
        "C1": c1,
    }


def band_taylor(k: int, bm: BandMinimum, order: int = 8, method: str = "perturbation",
                step: float = 1e-2) -> np.ndarray:
    """Taylor coefficients ``c_j`` of ``nu(zeta0 + d) = sum c_j d^j``, ``j <= order``.

    ``method="perturbation"`` runs Rayleigh-Schroedinger recursion on the
    discrete matrix, which is exactly quadratic in the momentum:
    ``T(zeta0 + d) = T0 + d T1 + d^2 I`` with ``T1 = diag(2 (zeta0 - p))``.
    ``method="finite-difference"`` differentiates ``nu`` on the real axis with
    a centered stencil of ``order + 2`` points per side and step ``step``.
    """
    grid = bm.ground.grid
    if method == "finite-difference":
        return _taylor_fd(k, bm.zeta0, grid, order, step)
    if method != "perturbation":
        raise ValueError(f"unknown method {method!r}")
    op = assemble_band_operator(k, bm.zeta0, grid)
    v0 = op.unknowns(bm.ground.eigenfunction)
    v0 = v0 / np.linalg.norm(v0)
    E0 = op.quadratic_form(v0)
    t1 = 2.0 * (bm.zeta0 - _profile(k, grid.nodes[grid.interior]))
    n = op.dim
    T = op.to_sparse() - E0 * sp.identity(n)
    border = sp.csr_matrix(v0.reshape(-1, 1))
    B = sp.bmat([[T, border], [border.T, None]], format="csc")
    lu = spla.splu(B)
    us = [v0]
    E = [E0]
    for m in range(1, order + 1):
        e_m = float(v0 @ (t1 * us[m - 1]))
        if m == 2:
            e_m += 1.0
        E.append(e_m)
        rhs = -t1 * us[m - 1]
        if m >= 2:
            rhs = rhs - us[m - 2]
        for j in range(1, m + 1):
            rhs = rhs + E[j] * us[m - j]
        sol = lu.solve(np.append(rhs, 0.0))
        us.append(sol[:n])
    return np.asarray(E)


def _fd_weights(offsets: np.ndarray, deriv: int) -> np.ndarray:
    m = offsets.shape[0]
    V = np.vander(offsets, m, increasing=True).T
    rhs = np.zeros(m)
    rhs[deriv] = math.factorial(deriv)
    return np.linalg.solve(V, rhs)


def _taylor_fd(k: int, z0: float, grid: Grid1D, order: int, step: float) -> np.ndarray:
    half = order // 2 + 1
    offs = np.arange(-half - order // 2, half + order // 2 + 1, dtype=float)
    vals = np.array([band_value(k, z0 + o * step, grid).nu for o in offs])
    out = np.zeros(order + 1)
    for j in range(order + 1):
        wts = _fd_weights(offs, j)
        out[j] = float(wts @ vals) / step ** j / math.factorial(j)
    return out


def band_table(k: int, zetas: Iterable[float], grid: Grid1D | None = None) -> list[BandPoint]:
    """Band values on a list of momenta (sequential; each solve is independent)."""
    grid = grid or default_grid(k)
    return [band_value(k, float(z), grid) for z in zetas]


def write_band_csv(points: Sequence[BandPoint], path: str | Path) -> Path:
    """CSV with header ``k,zeta,nu,residual``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["k", "zeta", "nu", "residual"])
        for p in points:
            wr.writerow([p.k, repr(p.zeta), repr(p.nu), repr(p.residual)])
    return path
