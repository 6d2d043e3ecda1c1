"""Semiclassical predictions: eikonal phases, transport spectra, Agmon weights.

The Montgomery-type operators ``D_t^2 + (h D_s - gamma(s) t^{k+1}/(k+1))^2``
have the effective symbol ``gamma^{2/(k+2)} nu^[k](gamma^{-1/(k+2)} xi)``.
Near a non-degenerate minimum of ``gamma`` the low-lying eigenvalues behave
like ``lambda0 + lambda_{n,1} h + o(h)``; the eikonal phase ``Phi`` is computed
here as a Taylor series from the band Taylor data.

The curvature ("camel") problem has the analogous explicit coefficients
``Theta0 - C1 kappa_max h + lambda_3(n) h^{3/2}`` in the boundary-layer scale.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.integrate import quad
from scipy.optimize import brentq, minimize_scalar

from .band1d import BandMinimum

__all__ = [
    "WellProfile",
    "WkbExpansion",
    "AgmonWeight",
    "CamelExpansion",
    "CurvatureProfile",
    "montgomery_expansion",
    "eikonal_taylor",
    "eikonal_residual",
    "agmon_weight",
    "camel_expansion",
    "curvature_profile_parabola",
    "curvature_profile_graph",
    "smooth_step",
    "write_agmon_csv",
]


# ------------------------------------------------------------- series helpers


def _mul(a: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    return np.convolve(a[:n], b[:n])[:n]


def _pow_series(f: np.ndarray, alpha: float, n: int) -> np.ndarray:
    """Coefficients of ``f(x)^alpha`` (``f[0] > 0``) by Miller's recurrence."""
    f = np.asarray(f, dtype=complex)
    f = np.concatenate([f, np.zeros(max(0, n - f.shape[0]))])[:n]
    g = np.zeros(n, dtype=complex)
    g[0] = f[0] ** alpha
    for m in range(1, n):
        j = np.arange(1, m + 1)
        g[m] = np.sum(((alpha + 1) * j - m) * f[j] * g[m - j]) / (m * f[0])
    return g


def _taylor_shift(coeffs: np.ndarray, s0: float, n: int) -> np.ndarray:
    """Taylor coefficients of the polynomial ``coeffs`` around ``s0``."""
    out = np.zeros(n)
    c = np.asarray(coeffs, dtype=float)
    fact = 1.0
    for j in range(n):
        if c.size == 0:
            break
        out[j] = P.polyval(s0, c) / fact
        c = P.polyder(c)
        fact *= j + 1
    return out


def smooth_step(x: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for ``x <= 0``, 1 for ``x >= 1``, built from ``exp(-1/x)``."""
    x = np.asarray(x, dtype=float)

    def psi(y: np.ndarray) -> np.ndarray:
        out = np.zeros_like(y)
        pos = y > 0
        with np.errstate(over="ignore"):  # subnormal y: exp(-inf) = 0 is exact
            out[pos] = np.exp(-1.0 / y[pos])
        return out

    a = psi(x)
    b = psi(1.0 - x)
    return a / (a + b)


# ----------------------------------------------------------------- profiles


@dataclass
class WellProfile:
    """Field strength ``gamma(s)`` as a polynomial (ascending coefficients)."""

    gamma: np.ndarray
    minima: list[tuple[float, float, float]]
    gamma0: float
    s_range: tuple[float, float] = (-5.0, 5.0)

    def __post_init__(self) -> None:
        self.gamma = np.asarray(self.gamma, dtype=float)
        for s, g, g2 in self.minima:
            if abs(g - self.gamma0) > 1e-9 * max(1.0, abs(self.gamma0)) or not g2 > 0:
                raise ValueError(f"invalid minimum at s={s}")
        probe = np.linspace(*self.s_range, 2001)
        if np.any(self(probe) <= 0):
            raise ValueError("gamma must be positive on the configured range")

    @classmethod
    def from_coeffs(cls, coeffs: Sequence[float],
                    s_range: tuple[float, float] = (-5.0, 5.0)) -> "WellProfile":
        """Detect the global minima of ``gamma`` inside ``s_range``."""
        c = np.asarray(coeffs, dtype=float)
        # negligible leading terms would send the critical-point roots to infinity
        scale = float(np.max(np.abs(c))) if c.size else 0.0
        d1 = P.polyder(P.polytrim(c, 1e-14 * scale) if scale > 0 else c)
        roots = P.polyroots(d1) if d1.size > 1 else np.array([])
        crit = [float(r.real) for r in np.atleast_1d(roots)
                if abs(r.imag) < 1e-10 and s_range[0] < r.real < s_range[1]]
        if not crit:
            # constant or monotone: report the sampled minimum
            probe = np.linspace(*s_range, 4001)
            s = float(probe[np.argmin(P.polyval(probe, c))])
            crit = [s]
        vals = np.array([P.polyval(s, c) for s in crit])
        g0 = float(vals.min())
        tol = 1e-9 * max(1.0, abs(g0))
        d2 = P.polyder(c, 2) if c.size > 2 else np.zeros(1)
        minima = sorted(
            (s, g0, float(P.polyval(s, d2)))
            for s, v in zip(crit, vals) if abs(v - g0) <= tol)
        # keep only points with positive curvature; flat profiles keep none
        minima = [m for m in minima if m[2] > 0]
        return cls(gamma=c, minima=minima, gamma0=g0, s_range=s_range)

    @classmethod
    def simple_well(cls) -> "WellProfile":
        """``gamma(s) = 1 + 4 s^2``."""
        return cls.from_coeffs([1.0, 0.0, 4.0])

    @classmethod
    def double_well(cls) -> "WellProfile":
        """``gamma(s) = 1 + (s^2 - 1)^2``."""
        return cls.from_coeffs([2.0, 0.0, -2.0, 0.0, 1.0])

    def __call__(self, s: np.ndarray | float) -> np.ndarray:
        return P.polyval(s, self.gamma)

    def derivative(self, s: np.ndarray | float, m: int = 1) -> np.ndarray:
        return P.polyval(s, P.polyder(self.gamma, m)) if self.gamma.size > m else 0.0 * np.asarray(s)

    def taylor(self, s0: float, n: int) -> np.ndarray:
        return _taylor_shift(self.gamma, s0, n)

    def to_dict(self) -> dict:
        return {"gamma": self.gamma.tolist(), "gamma0": self.gamma0,
                "minima": [list(m) for m in self.minima], "s_range": list(self.s_range)}

    @classmethod
    def from_dict(cls, d: dict) -> "WellProfile":
        return cls.from_coeffs(d["gamma"], tuple(d.get("s_range", (-5.0, 5.0))))


# ----------------------------------------------------------- Montgomery WKB


@dataclass
class WkbExpansion:
    """Two-term eigenvalue prediction and the Taylor phase at a well."""

    k: int
    lambda0: float
    lambda1_of_n: dict[int, float]
    phi_taylor: np.ndarray
    phi2: float
    well_center: float = 0.0

    def predicted(self, n: int, h: float) -> float:
        return self.lambda0 + self.lambda1_of_n[n] * h

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "lambda0": self.lambda0,
            "lambda1_of_n": {str(n): v for n, v in self.lambda1_of_n.items()},
            "phi_taylor": [[float(c.real), float(c.imag)] for c in np.asarray(self.phi_taylor, complex)],
            "phi2": self.phi2,
            "well_center": self.well_center,
        }

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text


def montgomery_expansion(k: int, well: WellProfile, band: BandMinimum, n_max: int = 4,
                         band_taylor: np.ndarray | None = None,
                         phi_order: int = 6) -> WkbExpansion:
    """Leading eigenvalue coefficients at the (first) minimum of ``gamma``.

    ``lambda0 = gamma0^{2/(k+2)} nu(zeta0)``,
    ``Phi''(0) = gamma0^{1/(k+2)} sqrt((2/(k+2)) gamma'' nu / (gamma0 nu''))`` and
    ``lambda_{n,1} = nu'' Phi''(0) (n - 1/2)``.  A flat profile gives zeros.

    Raises
    ------
    ValueError
        ``k`` mismatch, ``nu'' <= 0`` or a degenerate (non-flat) minimum.
    """
    if band.k != k:
        raise ValueError("band minimum computed for a different k")
    if not band.nu2 > 0:
        raise ValueError("nu'' must be positive")
    g0 = well.gamma0
    a = 2.0 / (k + 2)
    lam0 = g0 ** a * band.nu0
    flat = well.gamma.size <= 1 or np.all(well.gamma[1:] == 0)
    if flat:
        return WkbExpansion(k, lam0, {n: 0.0 for n in range(1, n_max + 1)},
                            np.zeros(phi_order + 1, dtype=complex), 0.0)
    if not well.minima:
        raise ValueError("degenerate minimum (gamma'' <= 0)")
    s0, _, g2 = well.minima[0]
    phi2 = g0 ** (1.0 / (k + 2)) * math.sqrt(a * g2 * band.nu0 / (g0 * band.nu2))
    lam1 = {n: band.nu2 * phi2 * (n - 0.5) for n in range(1, n_max + 1)}
    phi = np.zeros(phi_order + 1, dtype=complex)
    if band_taylor is not None and len(band_taylor) >= phi_order + 1:
        phi = eikonal_taylor(k, well, band_taylor, phi_order, s0=s0)
    else:
        phi[2] = phi2 / 2
    return WkbExpansion(k, lam0, lam1, phi, phi2, well_center=s0)


def _eikonal_rhs(k: int, well: WellProfile, nu0: float, s0: float, n: int) -> np.ndarray:
    a = 2.0 / (k + 2)
    g = well.taylor(s0, n)
    ratio = _pow_series(g / well.gamma0, -a, n)
    rhs = nu0 * ratio
    rhs[0] -= nu0
    return rhs


def _lhs(c: np.ndarray, w: np.ndarray, n: int) -> np.ndarray:
    """Coefficients of ``sum_{j>=2} c_j (i w)^j`` truncated to ``n`` terms."""
    iw = 1j * w
    out = np.zeros(n, dtype=complex)
    pw = _mul(iw, iw, n)
    for j in range(2, len(c)):
        out += c[j] * pw
        pw = _mul(pw, iw, n)
    return out


def eikonal_taylor(k: int, well: WellProfile, band_taylor: np.ndarray, order: int,
                   s0: float | None = None) -> np.ndarray:
    """Taylor coefficients ``Phi_0..Phi_order`` of the eikonal phase at a well.

    Solves ``nu(zeta0 + i gamma^{-1/(k+2)} Phi') = nu0 (gamma0/gamma)^{2/(k+2)}``
    order by order on the branch with ``Phi''(0) > 0``.  ``band_taylor[j]`` is
    the coefficient of ``d^j`` in ``nu(zeta0 + d)``; the linear one is treated
    as zero (critical point).  Coefficients are complex in general: odd
    Taylor coefficients of ``nu`` make odd orders of ``Phi`` imaginary.

    Raises
    ------
    ValueError
        ``order`` exceeds the band data, ``nu'' <= 0`` or a degenerate well.
    """
    c = np.asarray(band_taylor, dtype=complex).copy()
    if order < 2:
        raise ValueError("order must be at least 2")
    if len(c) < order + 1:
        raise ValueError("order exceeds available band Taylor data")
    c = c[: order + 1]
    c[1] = 0.0
    if not c[2].real > 0:
        raise ValueError("band curvature must be positive")
    if s0 is None:
        s0 = well.minima[0][0] if well.minima else 0.0
    n = order + 1
    F = _eikonal_rhs(k, well, float(c[0].real), s0, n)
    w = np.zeros(order, dtype=complex)  # w_0..w_{order-1}
    if abs(F[2]) < 1e-300:
        if np.allclose(F, 0):
            return np.zeros(n, dtype=complex)
        raise ValueError("branch selection ambiguous at a degenerate well")
    w1sq = -F[2] / c[2]
    if not w1sq.real > 0:
        raise ValueError("not a minimum of gamma")
    w[1] = np.sqrt(w1sq)
    for m in range(2, order):
        w[m] = 0.0
        R = _lhs(c, np.append(w, 0.0), n)[m + 1]
        w[m] = (F[m + 1] - R) / (-2.0 * c[2] * w[1])
    gfac = _pow_series(well.taylor(s0, n), 1.0 / (k + 2), n)
    dphi = _mul(gfac, w, order)
    phi = np.zeros(n, dtype=complex)
    phi[1:] = dphi / np.arange(1, n)
    return phi


def eikonal_residual(k: int, well: WellProfile, band_taylor: np.ndarray, phi: np.ndarray,
                     s0: float | None = None) -> np.ndarray:
    """Taylor coefficients of LHS - RHS of the eikonal equation after substituting ``phi``.

    Returned through the degree ``len(phi) - 1`` (the orders ``phi`` controls).
    """
    phi = np.asarray(phi, dtype=complex)
    n = phi.shape[0]
    c = np.asarray(band_taylor, dtype=complex).copy()[:n]
    c[1] = 0.0
    if s0 is None:
        s0 = well.minima[0][0] if well.minima else 0.0
    dphi = phi[1:] * np.arange(1, n)
    ginv = _pow_series(well.taylor(s0, n), -1.0 / (k + 2), n)
    w = _mul(ginv, np.append(dphi, 0.0), n)
    return _lhs(c, w, n) - _eikonal_rhs(k, well, float(c[0].real), s0, n)


# ------------------------------------------------------------------- Agmon


@dataclass
class AgmonWeight:
    s_samples: np.ndarray
    z_samples: np.ndarray
    wells: list[float]
    variant: str = "single"
    meta: dict = field(default_factory=dict)

    def __call__(self, s: np.ndarray | float) -> np.ndarray:
        return np.interp(s, self.s_samples, self.z_samples)


def _adaptive_cumtrapz(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
                       rtol: float = 1e-8, max_level: int = 18) -> np.ndarray:
    """Cumulative integral on the nodes ``x``; each cell refined by doubling."""
    a, b = x[:-1], x[1:]
    width = b - a
    m = 1
    prev = 0.5 * width * (f(a) + f(b))
    fa, fb = f(a), f(b)
    done = np.zeros(a.shape, dtype=bool)
    val = prev.copy()
    for _ in range(max_level):
        m *= 2
        idx = np.nonzero(~done)[0]
        if idx.size == 0:
            break
        t = (np.arange(1, m, 2) / m)[None, :]
        pts = a[idx, None] + width[idx, None] * t
        mids = f(pts.ravel()).reshape(pts.shape).sum(axis=1)
        cur = 0.5 * prev[idx] + width[idx] / m * mids
        ok = np.abs(cur - prev[idx]) <= rtol * np.maximum(np.abs(cur), 1e-14)
        val[idx] = cur
        prev[idx] = cur
        done[idx[ok]] = True
    _ = fa, fb
    return np.concatenate([[0.0], np.cumsum(val)])


def _radicand(k: int, well: WellProfile) -> Callable[[np.ndarray], np.ndarray]:
    a = 2.0 / (k + 2)
    g0a = well.gamma0 ** a

    def f(s: np.ndarray) -> np.ndarray:
        r = well(s) ** a - g0a
        if np.any(r < -1e-10 * max(1.0, g0a)):
            raise ValueError("gamma dips below gamma0: invalid well profile")
        return np.sqrt(np.maximum(r, 0.0))

    return f


def _one_well(k: int, well: WellProfile, s: np.ndarray, s0: float,
              chi: Callable[[np.ndarray], np.ndarray], rtol: float) -> np.ndarray:
    rad = _radicand(k, well)

    def integrand(x: np.ndarray) -> np.ndarray:
        return chi(x) * rad(x)

    grid = np.unique(np.append(s, s0))
    cum = _adaptive_cumtrapz(integrand, grid, rtol)
    cum -= cum[np.searchsorted(grid, s0)]
    return np.abs(np.interp(s, grid, cum))


def agmon_weight(k: int, well: WellProfile, s_grid: np.ndarray, variant: str = "single",
                 delta: float = 0.5, chi_radius: float | None = None,
                 rtol: float = 1e-8) -> AgmonWeight:
    """Agmon-type distance ``z(s)`` from the well(s).

    Parameters
    ----------
    variant : {"single", "double"}
        ``double`` glues the one-well integrals from ``s_-`` and ``s_+`` with
        smooth cutoffs equal to one on ``s <= delta/2`` (resp. ``s >= -delta/2``)
        and vanishing beyond ``delta`` (resp. ``-delta``).
    chi_radius : float, optional
        Support radius of the outer cutoff around the wells; ``None`` means
        no cutoff on the sampled range.
    """
    s = np.asarray(s_grid, dtype=float)
    if chi_radius is None:
        def chi(x: np.ndarray) -> np.ndarray:
            return np.ones_like(x)
    else:
        lo = min(m[0] for m in well.minima) - chi_radius
        hi = max(m[0] for m in well.minima) + chi_radius

        def chi(x: np.ndarray) -> np.ndarray:
            return smooth_step((x - lo + 0.5) / 0.5) * smooth_step((hi + 0.5 - x) / 0.5)
    if variant == "single":
        if len(well.minima) != 1:
            raise ValueError("single variant needs exactly one minimum")
        s0 = well.minima[0][0]
        z = _one_well(k, well, s, s0, chi, rtol)
        wells = [s0]
    elif variant == "double":
        if len(well.minima) != 2:
            raise ValueError("double variant needs two minima")
        sm, sp_ = well.minima[0][0], well.minima[1][0]
        if abs(sm + sp_) > 1e-8:
            raise ValueError("double variant needs symmetric minima")
        if not 0 < delta < sp_:
            raise ValueError("delta must lie in (0, s_+)")
        chim = 1.0 - smooth_step((s - delta / 2) / (delta / 2))
        chip = smooth_step((s + delta) / (delta / 2))
        z = chim * _one_well(k, well, s, sm, chi, rtol) + chip * _one_well(k, well, s, sp_, chi, rtol)
        wells = [sm, sp_]
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return AgmonWeight(s_samples=s, z_samples=z, wells=wells, variant=variant,
                       meta={"k": k, "delta": delta})


def write_agmon_csv(weight: AgmonWeight, path: str | Path) -> Path:
    """CSV with header ``s,z``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["s", "z"])
        for a, b in zip(weight.s_samples, weight.z_samples):
            wr.writerow([repr(float(a)), repr(float(b))])
    return path


# ------------------------------------------------------------------- camel


@dataclass
class CurvatureProfile:
    """Boundary curvature sampled in arclength, with maximum data."""

    sigma: np.ndarray
    kappa: np.ndarray
    kappa_max: float
    sigma_max: list[float]
    k2: float
    x_of_sigma: np.ndarray
    closure: Callable[[np.ndarray], np.ndarray] | None = None

    def __call__(self, s: np.ndarray | float) -> np.ndarray:
        if self.closure is not None:
            return self.closure(np.asarray(s, dtype=float))
        return np.interp(s, self.sigma, self.kappa)


class _GraphCurve:
    """Boundary ``x2 = f(x1)`` of the domain ``x2 < f(x1)`` (polynomial ``f``)."""

    def __init__(self, coeffs: Sequence[float]):
        self.c = np.asarray(coeffs, dtype=float)
        self.d1 = P.polyder(self.c)
        self.d2 = P.polyder(self.c, 2)

    def speed(self, x: np.ndarray) -> np.ndarray:
        return np.sqrt(1.0 + P.polyval(x, self.d1) ** 2)

    def kappa_x(self, x: np.ndarray) -> np.ndarray:
        fp = P.polyval(x, self.d1)
        return -P.polyval(x, self.d2) / (1.0 + fp * fp) ** 1.5

    def arclength(self, x: float) -> float:
        return quad(lambda t: float(self.speed(t)), 0.0, x, epsabs=1e-13, epsrel=1e-13, limit=200)[0]

    def x_of_sigma(self, sig: np.ndarray) -> np.ndarray:
        out = np.empty_like(sig, dtype=float)
        for i, s in enumerate(np.asarray(sig, dtype=float).ravel()):
            if s == 0.0:
                out.flat[i] = 0.0
                continue
            hi = abs(s)  # speed >= 1 so |x| <= |sigma|
            r = brentq(lambda x: self.arclength(x) - abs(s), 0.0, hi, xtol=1e-14, rtol=1e-14)
            out.flat[i] = math.copysign(r, s)
        return out

    def kappa_sigma(self, sig: np.ndarray) -> np.ndarray:
        return self.kappa_x(self.x_of_sigma(np.atleast_1d(sig)))


def _second_diff(f: Callable[[np.ndarray], np.ndarray], s0: float, d: float) -> float:
    """Fourth-order five-point second derivative."""
    v = f(s0 + d * np.array([-2.0, -1.0, 0.0, 1.0, 2.0]))
    return float((-v[0] + 16 * v[1] - 30 * v[2] + 16 * v[3] - v[4]) / (12 * d * d))


def _k2_fd(curve: _GraphCurve, s0: float, d: float = 2e-3) -> float:
    return -_second_diff(curve.kappa_sigma, s0, d)


def curvature_profile_graph(coeffs: Sequence[float], sigma_grid: np.ndarray,
                            symmetric_max: bool = False) -> CurvatureProfile:
    """Curvature in arclength of the boundary ``x2 = f(x1)`` (polynomial ``f``).

    Arclength is measured from ``x1 = 0``; ``x(sigma)`` is recovered by
    bracketed root finding on the monotone quadrature ``sigma(x)``.  The
    maximum (or the symmetric pair of maxima) and ``k2 = -kappa''`` there are
    located numerically.
    """
    curve = _GraphCurve(coeffs)
    sig = np.asarray(sigma_grid, dtype=float)
    xs = curve.x_of_sigma(sig)
    kap = curve.kappa_x(xs)
    i = int(np.argmax(kap))
    # refine the maximizer in x, then map to arclength
    span = max(abs(sig[1] - sig[0]) if sig.size > 1 else 1e-2, 1e-3)
    lo, hi = xs[max(i - 1, 0)] - span, xs[min(i + 1, xs.size - 1)] + span
    r = minimize_scalar(lambda x: -float(curve.kappa_x(np.array([x]))[0]), bounds=(lo, hi),
                        method="bounded", options={"xatol": 1e-12})
    xm = float(r.x)
    sm = curve.arclength(xm)
    kmax = float(curve.kappa_x(np.array([xm]))[0])
    k2 = _k2_fd(curve, sm)
    smax = [-abs(sm), abs(sm)] if symmetric_max else [sm]
    return CurvatureProfile(sigma=sig, kappa=kap, kappa_max=kmax, sigma_max=smax, k2=k2,
                            x_of_sigma=xs, closure=curve.kappa_sigma)


def curvature_profile_parabola(c: float, sigma_grid: np.ndarray) -> CurvatureProfile:
    """Curvature of ``x2 = -c x1^2`` in arclength; ``kappa(0) = 2c``.

    Uses the closed-form arclength ``(2 c x sqrt(1 + 4 c^2 x^2) + asinh(2 c x)) / (4 c)``
    inverted by bracketed root finding.
    """
    if not c > 0:
        raise ValueError("c must be positive")
    sig = np.asarray(sigma_grid, dtype=float)

    def arc(x: float) -> float:
        u = 2 * c * x
        return (u * math.sqrt(1 + u * u) + math.asinh(u)) / (4 * c)

    def x_of(s: np.ndarray) -> np.ndarray:
        out = np.empty(np.shape(s))
        for i, v in enumerate(np.atleast_1d(s).ravel()):
            if v == 0:
                out.flat[i] = 0.0
            else:
                out.flat[i] = math.copysign(
                    brentq(lambda x: arc(x) - abs(v), 0.0, abs(v), xtol=1e-15, rtol=1e-15), v)
        return out

    def kap_of(s: np.ndarray) -> np.ndarray:
        x = x_of(s)
        return 2 * c / (1 + 4 * c * c * x * x) ** 1.5

    xs = x_of(sig)
    kap = 2 * c / (1 + 4 * c * c * xs * xs) ** 1.5
    k2 = -_second_diff(kap_of, 0.0, 2e-3)
    return CurvatureProfile(sigma=sig, kappa=kap, kappa_max=2 * c, sigma_max=[0.0], k2=k2,
                            x_of_sigma=xs, closure=kap_of)


@dataclass
class CamelExpansion:
    theta0: float
    C1: float
    kappa_max: float
    k2: float
    lambda_terms: dict[int, tuple[float, float, float, float]]
    phi_sigma: np.ndarray = field(default_factory=lambda: np.zeros(0))
    phi_camel: np.ndarray = field(default_factory=lambda: np.zeros(0))
    phi2: float = 0.0

    def predicted(self, n: int, h: float) -> float:
        l0, l1, l2, l3 = self.lambda_terms[n]
        return l0 + l1 * h ** 0.5 + l2 * h + l3 * h ** 1.5

    def to_dict(self) -> dict:
        return {
            "theta0": self.theta0, "C1": self.C1, "kappa_max": self.kappa_max, "k2": self.k2,
            "lambda_terms": {str(n): list(v) for n, v in self.lambda_terms.items()},
            "phi2": self.phi2,
            "phi_camel": {"sigma": self.phi_sigma.tolist(), "phi": self.phi_camel.tolist()},
        }

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text


def camel_expansion(band0: BandMinimum, C1: float, kappa_max: float, k2: float,
                    n_max: int = 4, kappa: Callable[[np.ndarray], np.ndarray] | None = None,
                    sigma_grid: np.ndarray | None = None, sigma_center: float = 0.0,
                    rtol: float = 1e-10) -> CamelExpansion:
    """Curvature-well coefficients and, given ``kappa``, the phase ``Phi(sigma)``.

    ``lambda_terms[n] = (Theta0, 0, -C1 kappa_max, (2n-1) C1 Theta0^{1/4} sqrt(3 k2 / 2))``
    and ``Phi = sqrt(2 C1 / nu'') |int_0^sigma sqrt(kappa(0) - kappa)|``.

    Raises
    ------
    ValueError
        ``k2 <= 0``, ``kappa_max <= 0`` or ``kappa`` exceeding its value at
        the center somewhere on the grid.
    """
    if not k2 > 0 or not kappa_max > 0:
        raise ValueError("need k2 > 0 and kappa_max > 0")
    th = band0.nu0
    l3 = C1 * th ** 0.25 * math.sqrt(1.5 * k2)
    terms = {n: (th, 0.0, -C1 * kappa_max, (2 * n - 1) * l3) for n in range(1, n_max + 1)}
    phi2 = math.sqrt(k2 * C1 / band0.nu2)
    sig = np.zeros(0)
    phi = np.zeros(0)
    if kappa is not None and sigma_grid is not None:
        sig = np.asarray(sigma_grid, dtype=float)
        k0 = float(np.atleast_1d(kappa(np.array([sigma_center])))[0])
        scale = math.sqrt(2 * C1 / band0.nu2)

        def rad(x: np.ndarray) -> np.ndarray:
            r = k0 - kappa(np.asarray(x))
            if np.any(r < -1e-9 * max(1.0, abs(k0))):
                raise ValueError("kappa exceeds its central value: not a maximum")
            return np.sqrt(np.maximum(r, 0.0))

        grid = np.unique(np.append(sig, sigma_center))
        cum = _adaptive_cumtrapz(rad, grid, rtol)
        cum -= cum[np.searchsorted(grid, sigma_center)]
        phi = scale * np.abs(np.interp(sig, grid, cum))
    return CamelExpansion(theta0=th, C1=C1, kappa_max=kappa_max, k2=k2, lambda_terms=terms,
                          phi_sigma=sig, phi_camel=phi, phi2=phi2)
