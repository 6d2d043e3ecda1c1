"""Sparse Hermitian finite-difference discretizations on rectangles.

Every operator is first written as a quadratic form on the nodal values
(trapezoid weights in ``t``, so a Neumann side carries half weight) and then
symmetrized by the diagonal similarity ``W^{1/2}``.  The stored matrix is thus
exactly Hermitian, and ``node_scale`` maps eigenvectors back to nodal values.

Magnetic links use the arithmetic mean of the potential at the two endpoints;
the ``(i, i+1)`` entry of ``D_s^2 h^2 + h(D_s A1 + A1 D_s)`` with
``D_s = -i d/ds`` is ``-h^2/ds^2 - i h (A1_i + A1_{i+1}) / (2 ds)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import polynomial as P

from .wkb import WellProfile

__all__ = [
    "Grid2D",
    "HermitianSparse",
    "WeightPositivityError",
    "assemble_montgomery",
    "assemble_general",
    "assemble_camel",
    "assemble_camel_physical",
]

DIRICHLET = "dirichlet"
NEUMANN = "neumann"
_SIDES = ("s_min", "s_max", "t_min", "t_max")


class WeightPositivityError(ValueError):
    """The camel weight ``1 - h tau kappa`` is not positive on the grid."""


@dataclass(frozen=True)
class Grid2D:
    """Tensor grid on ``[s_min, s_max] x [t_min, t_max]``; counts include boundary nodes."""

    s_min: float
    s_max: float
    t_min: float
    t_max: float
    nx: int
    ny: int
    bc: dict = field(default_factory=lambda: {s: DIRICHLET for s in _SIDES})

    def __post_init__(self) -> None:
        if self.nx < 8 or self.ny < 8:
            raise ValueError("nx, ny must be >= 8")
        if not (self.s_max > self.s_min and self.t_max > self.t_min):
            raise ValueError("empty rectangle")
        bc = {s: DIRICHLET for s in _SIDES}
        bc.update(self.bc)
        for side, kind in bc.items():
            if side not in _SIDES or kind not in (DIRICHLET, NEUMANN):
                raise ValueError(f"bad boundary condition {side}={kind}")
            if kind == NEUMANN and side != "t_min":
                raise ValueError("neumann is only supported on t_min")
        object.__setattr__(self, "bc", bc)

    @classmethod
    def box(cls, a: float, t_range: tuple[float, float], nx: int, ny: int,
            neumann_bottom: bool = False) -> "Grid2D":
        bc = {s: DIRICHLET for s in _SIDES}
        if neumann_bottom:
            bc["t_min"] = NEUMANN
        return cls(-a, a, t_range[0], t_range[1], nx, ny, bc)

    @property
    def ds(self) -> float:
        return (self.s_max - self.s_min) / (self.nx - 1)

    @property
    def dt(self) -> float:
        return (self.t_max - self.t_min) / (self.ny - 1)

    @property
    def neumann_bottom(self) -> bool:
        return self.bc["t_min"] == NEUMANN

    @property
    def s_nodes(self) -> np.ndarray:
        """Unknown ``s`` nodes (Dirichlet ends excluded)."""
        return self.s_min + self.ds * np.arange(1, self.nx - 1)

    @property
    def t_nodes(self) -> np.ndarray:
        start = 0 if self.neumann_bottom else 1
        return self.t_min + self.dt * np.arange(start, self.ny - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return self.s_nodes.size, self.t_nodes.size

    @property
    def t_weights(self) -> np.ndarray:
        w = np.ones(self.t_nodes.size)
        if self.neumann_bottom:
            w[0] = 0.5
        return w

    def to_dict(self) -> dict:
        return {"s_min": self.s_min, "s_max": self.s_max, "t_min": self.t_min,
                "t_max": self.t_max, "nx": self.nx, "ny": self.ny, "bc": dict(self.bc)}

    @classmethod
    def from_dict(cls, d: dict) -> "Grid2D":
        return cls(d["s_min"], d["s_max"], d["t_min"], d["t_max"], int(d["nx"]), int(d["ny"]),
                   dict(d.get("bc", {})))


@dataclass
class HermitianSparse:
    """Upper-triangle storage (``row <= col``) of a Hermitian matrix.

    ``mass`` is the optional diagonal of the generalized problem, ``node_scale``
    the factor with ``nodal = vector / node_scale`` (shape ``grid.shape``).
    """

    dim: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    grid: Grid2D
    mass: np.ndarray | None = None
    node_scale: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if np.any(self.rows > self.cols):
            raise ValueError("entries must satisfy row <= col")
        diag = self.rows == self.cols
        self.vals = np.asarray(self.vals, dtype=complex)
        self.vals[diag] = self.vals[diag].real
        if not np.all(np.isfinite(self.vals)):
            raise ValueError("non-finite entries")
        if self.mass is not None and not np.all(self.mass > 0):
            raise WeightPositivityError("mass must be positive")

    @property
    def entries(self):
        return zip(self.rows.tolist(), self.cols.tolist(), self.vals.tolist())

    def to_csr(self) -> sp.csr_matrix:
        off = self.rows != self.cols
        r = np.concatenate([self.rows, self.cols[off]])
        c = np.concatenate([self.cols, self.rows[off]])
        v = np.concatenate([self.vals, np.conj(self.vals[off])])
        return sp.csr_matrix((v, (r, c)), shape=(self.dim, self.dim))

    def gershgorin_lower(self) -> float:
        A = self.to_csr()
        d = A.diagonal().real
        radius = np.asarray(abs(A).sum(axis=1)).ravel() - np.abs(d)
        low = d - radius
        if self.mass is not None:
            # lower bound of the pencil: min over rows of low_i / m_i when low_i < 0
            low = np.where(low < 0, low / self.mass.min(), low / self.mass.max())
        return float(low.min())

    def nodal(self, v: np.ndarray) -> np.ndarray:
        """Vector of unknowns to nodal values on ``grid.shape``."""
        u = np.asarray(v).reshape(self.grid.shape)
        return u / self.node_scale if self.node_scale is not None else u

    def export(self, path: str | Path, **extra) -> dict[str, Path]:
        """Write ``path`` (``row col re im``, full matrix), ``path.json`` and ``path.mass``."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        A = self.to_csr().tocoo()
        order = np.lexsort((A.col, A.row))
        with path.open("w") as fh:
            for r, c, z in zip(A.row[order], A.col[order], A.data[order]):
                fh.write(f"{r} {c} {z.real:.17g} {z.imag:.17g}\n")
        side = {"dim": self.dim, "h": self.meta.get("h"), "k": self.meta.get("k"),
                "grid": self.grid.to_dict(), "bc": dict(self.grid.bc),
                "nnz": int(A.nnz), "kind": self.meta.get("kind")}
        side.update(extra)
        out = {"matrix": path, "sidecar": path.with_name(path.name + ".json")}
        out["sidecar"].write_text(json.dumps(side, indent=2))
        if self.mass is not None:
            out["mass"] = path.with_name(path.name + ".mass")
            np.savetxt(out["mass"], self.mass, fmt="%.17g")
        return out


# ------------------------------------------------------------------ builders


def _from_form(grid: Grid2D, diag: np.ndarray, s_link: np.ndarray, t_link: np.ndarray,
               weight: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Upper entries of ``W^{-1/2} K W^{-1/2}`` from the form pieces.

    ``diag`` (nS, nT), ``s_link`` (nS-1, nT) for ``(i,j)-(i+1,j)``, ``t_link``
    (nS, nT-1) for ``(i,j)-(i,j+1)``; ``weight`` (nS, nT) is the form weight.
    """
    nS, nT = grid.shape
    idx = np.arange(nS * nT).reshape(nS, nT)
    sq = np.sqrt(weight)
    r = [idx.ravel(), idx[:-1, :].ravel(), idx[:, :-1].ravel()]
    c = [idx.ravel(), idx[1:, :].ravel(), idx[:, 1:].ravel()]
    v = [
        (diag / weight).ravel(),
        (s_link / (sq[:-1, :] * sq[1:, :])).ravel(),
        (t_link / (sq[:, :-1] * sq[:, 1:])).ravel(),
    ]
    return np.concatenate(r), np.concatenate(c), np.concatenate(v).astype(complex)


def _magnetic_form(grid: Grid2D, h: float, A1: np.ndarray, V_t: np.ndarray | None = None):
    """Form pieces of ``D_t^2 + (h D_s + A1)^2`` with trapezoid weights in ``t``.

    ``V_t`` optionally replaces the plain ``t``-link coefficient (flux form).
    """
    ds, dt = grid.ds, grid.dt
    nS, nT = grid.shape
    w = np.broadcast_to(grid.t_weights, (nS, nT))
    # s-direction and potential, weighted by the t trapezoid weight
    diag = w * (2 * h * h / ds ** 2 + A1.real ** 2)
    s_link = w[:-1] * (-h * h / ds ** 2 - 1j * h * (A1[:-1] + A1[1:]) / (2 * ds))
    # t-direction: each link contributes |u_{j+1} - u_j|^2 / dt^2
    coef = np.ones((nS, nT - 1)) if V_t is None else V_t
    t_link = -coef / dt ** 2
    tdiag = np.zeros((nS, nT))
    tdiag[:, :-1] += coef / dt ** 2
    tdiag[:, 1:] += coef / dt ** 2
    # link to the removed Dirichlet node at t_max (and t_min if Dirichlet)
    tdiag[:, -1] += 1.0 / dt ** 2 if V_t is None else V_t[:, -1] / dt ** 2
    if not grid.neumann_bottom:
        tdiag[:, 0] += 1.0 / dt ** 2 if V_t is None else V_t[:, 0] / dt ** 2
    return diag + tdiag, s_link, t_link, w


def _finish(grid: Grid2D, diag, s_link, t_link, w, meta: dict,
            mass: np.ndarray | None = None) -> HermitianSparse:
    r, c, v = _from_form(grid, diag, s_link, t_link, w)
    nS, nT = grid.shape
    return HermitianSparse(dim=nS * nT, rows=r, cols=c, vals=v, grid=grid,
                           mass=None if mass is None else mass.ravel(),
                           node_scale=np.sqrt(w), meta=meta)


def _check_h(h: float) -> None:
    if not h > 0:
        raise ValueError("h must be positive")


def assemble_general(A1: np.ndarray | Callable[[np.ndarray, np.ndarray], np.ndarray],
                     h: float, grid: Grid2D, meta: dict | None = None) -> HermitianSparse:
    """``D_t^2 + (h D_s + A1(s, t))^2`` with ``A1`` real.

    Parameters
    ----------
    A1 : array_like or callable
        Bivariate coefficients ``c[p, q]`` of ``s^p t^q``, or ``A1(S, T)``.
    """
    _check_h(h)
    S, T = np.meshgrid(grid.s_nodes, grid.t_nodes, indexing="ij")
    if callable(A1):
        vals = np.asarray(A1(S, T), dtype=float)
    else:
        vals = P.polyval2d(S, T, np.atleast_2d(np.asarray(A1, dtype=float)))
    vals = np.broadcast_to(vals, S.shape).astype(float)
    diag, s_link, t_link, w = _magnetic_form(grid, h, vals)
    info = {"kind": "general", "h": h}
    info.update(meta or {})
    return _finish(grid, diag, s_link, t_link, w, info)


def assemble_montgomery(k: int, well: WellProfile, h: float, grid: Grid2D,
                        gauge_shift: float = 0.0) -> HermitianSparse:
    """``D_t^2 + (h D_s - gamma(s) t^{k+1}/(k+1))^2`` on the truncated domain.

    ``gauge_shift`` adds a constant ``xi`` to the momentum (conjugation by
    ``exp(i xi s / h)``, a unitary map preserving the spectrum); taking
    ``xi = gamma0^{1/(k+2)} zeta0`` removes the fast oscillation in ``s``.
    """
    _check_h(h)
    if k < 0:
        raise ValueError("k must be non-negative")
    if k == 0:
        if not (grid.neumann_bottom and grid.t_min == 0.0):
            raise ValueError("k=0 needs a neumann side at t_min = 0")
    elif grid.neumann_bottom:
        raise ValueError("k>=1 needs an all-dirichlet rectangle")

    def a1(S: np.ndarray, T: np.ndarray) -> np.ndarray:
        return gauge_shift - well(S) * T ** (k + 1) / (k + 1)

    return assemble_general(a1, h, grid, meta={"kind": "montgomery", "k": k,
                                               "gauge_shift": gauge_shift})


def assemble_camel(kappa: np.ndarray | Callable[[np.ndarray], np.ndarray], zeta0: float,
                   h: float, grid: Grid2D) -> HermitianSparse:
    """Boundary-coordinates curvature operator with weight ``m = 1 - h tau kappa(sigma)``.

    Discretizes the form
    ``int m |D_tau u|^2 + m^{-1} |(h D_sigma + zeta0 - tau + h kappa tau^2/2) u|^2``
    against the mass ``int m |u|^2``; ``s`` is ``sigma``, ``t`` is ``tau``.

    Raises
    ------
    WeightPositivityError
        ``m <= 0`` at a node or link midpoint.
    """
    _check_h(h)
    if not (grid.neumann_bottom and grid.t_min == 0.0):
        raise ValueError("camel needs a neumann side at tau = 0")
    sig, tau = grid.s_nodes, grid.t_nodes
    kap = np.asarray(kappa(sig) if callable(kappa) else kappa, dtype=float)
    if kap.shape != sig.shape:
        raise ValueError("kappa samples must match the interior sigma nodes")
    S_k, T = np.meshgrid(kap, tau, indexing="ij")
    m = 1.0 - h * T * S_k
    tau_mid = 0.5 * (tau[:-1] + tau[1:])
    m_mid = 1.0 - h * np.outer(kap, tau_mid)
    if np.any(m <= 0) or np.any(m_mid <= 0) or np.any(1.0 - h * grid.t_max * kap <= 0):
        raise WeightPositivityError("1 - h tau kappa must stay positive on the grid")
    V = zeta0 - T + 0.5 * h * S_k * T ** 2
    ds, dt = grid.ds, grid.dt
    nS, nT = grid.shape
    w = np.broadcast_to(grid.t_weights, (nS, nT))
    minv = 1.0 / m
    W = V * minv
    # sigma part: h^2 D m^{-1} D + h (D W + W D) + V^2/m, flux form with averaged m^{-1}
    mi_link = 0.5 * (minv[:-1] + minv[1:])
    # the Dirichlet ends see the nodal value
    diag = w * (V * V * minv)
    diag[:-1] += w[:-1] * h * h * mi_link / ds ** 2
    diag[1:] += w[1:] * h * h * mi_link / ds ** 2
    diag[0] += w[0] * h * h * minv[0] / ds ** 2
    diag[-1] += w[-1] * h * h * minv[-1] / ds ** 2
    s_link = w[:-1] * (-h * h * mi_link / ds ** 2 - 1j * h * (W[:-1] + W[1:]) / (2 * ds))
    # tau part with m at link midpoints; top Dirichlet link uses the boundary midpoint
    t_link = -m_mid / dt ** 2
    tdiag = np.zeros((nS, nT))
    tdiag[:, :-1] += m_mid / dt ** 2
    tdiag[:, 1:] += m_mid / dt ** 2
    top = 1.0 - h * kap * (tau[-1] + 0.5 * dt)
    tdiag[:, -1] += top / dt ** 2
    diag = diag + tdiag
    meta = {"kind": "camel", "h": h, "zeta0": zeta0, "k": 0}
    return _finish(grid, diag, s_link, t_link, w, meta, mass=m)


def assemble_camel_physical(f: Sequence[float], hbar: float, grid: Grid2D,
                            beta: float = 0.0) -> HermitianSparse:
    """Unit-field magnetic Neumann Laplacian on ``{x2 < f(x1)}`` in sheared coordinates.

    With ``s = x1`` and depth ``t = f(x1) - x2`` (Jacobian one) the form is
    ``int |hbar (d_s + f' d_t) u - i (t - beta s_arc'(s)) u|^2 + hbar^2 |d_t u|^2``
    on ``[s_min, s_max] x [0, t_max]``, Neumann at ``t = 0`` and Dirichlet
    elsewhere.  ``beta`` is a tangential gauge shift along the arclength
    ``s_arc``.  Bilinear (Q1) elements with 2x2 Gauss quadrature and a
    lumped mass; the matrix is returned symmetrized by the lumped mass.
    """
    _check_h(hbar)
    if not (grid.neumann_bottom and grid.t_min == 0.0):
        raise ValueError("physical camel needs a neumann side at t = 0")
    c = np.asarray(f, dtype=float)
    d1 = P.polyder(c)
    xs = grid.s_min + grid.ds * np.arange(grid.nx)
    ts = grid.t_min + grid.dt * np.arange(grid.ny)
    ds, dt = grid.ds, grid.dt
    g = np.array([-1.0, 1.0]) / np.sqrt(3.0)
    # reference bilinear basis at the 4 Gauss points: local nodes (0,0),(1,0),(0,1),(1,1)
    xi = 0.5 * (1 + g)
    gx, gy = np.meshgrid(xi, xi, indexing="ij")
    gx, gy = gx.ravel(), gy.ravel()
    N = np.stack([(1 - gx) * (1 - gy), gx * (1 - gy), (1 - gx) * gy, gx * gy], axis=1)
    Nx = np.stack([-(1 - gy), (1 - gy), -gy, gy], axis=1) / ds
    Ny = np.stack([-(1 - gx), -gx, (1 - gx), gx], axis=1) / dt
    wq = 0.25 * ds * dt
    ex, ey = np.meshgrid(np.arange(grid.nx - 1), np.arange(grid.ny - 1), indexing="ij")
    ex, ey = ex.ravel(), ey.ravel()
    # quadrature points per element: (ne, 4)
    Xq = xs[ex][:, None] + ds * gx[None, :]
    Tq = ts[ey][:, None] + dt * gy[None, :]
    fp = P.polyval(Xq, d1)
    arc = np.sqrt(1 + fp * fp)
    phase = Tq - beta * arc
    # element operator L u = hbar (N_x + f' N_y) u - i phase N u
    L = hbar * (Nx[None, :, :] + fp[:, :, None] * Ny[None, :, :]) - 1j * phase[:, :, None] * N[None, :, :]
    Ke = wq * (np.einsum("eqa,eqb->eab", np.conj(L), L)
               + hbar * hbar * np.einsum("qa,qb->ab", Ny, Ny)[None, :, :])
    loc = np.stack([ex * grid.ny + ey, (ex + 1) * grid.ny + ey,
                    ex * grid.ny + ey + 1, (ex + 1) * grid.ny + ey + 1], axis=1)
    rows = np.repeat(loc, 4, axis=1).ravel()
    cols = np.tile(loc, (1, 4)).ravel()
    K = sp.csr_matrix((Ke.ravel(), (rows, cols)), shape=(grid.nx * grid.ny,) * 2)
    lump = np.zeros(grid.nx * grid.ny)
    np.add.at(lump, loc.ravel(), np.full(loc.size, ds * dt / 4))
    keep_i = np.arange(1, grid.nx - 1)
    keep_j = np.arange(0, grid.ny - 1)
    keep = (keep_i[:, None] * grid.ny + keep_j[None, :]).ravel()
    K = K[keep][:, keep]
    mvec = lump[keep]
    sc = 1.0 / np.sqrt(mvec)
    A = sp.diags(sc) @ K @ sp.diags(sc)
    A = sp.triu(A).tocoo()
    nS, nT = grid.shape
    meta = {"kind": "camel-physical", "h": hbar, "beta": beta, "f": c.tolist(), "k": 0}
    return HermitianSparse(dim=nS * nT, rows=A.row, cols=A.col, vals=A.data, grid=grid,
                           node_scale=np.sqrt(mvec / (ds * dt)).reshape(nS, nT), meta=meta)
