import json
import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import brentq, minimize_scalar

from magwkb import band1d as b
from magwkb import wkb as w


@pytest.fixture(scope="module")
def bm0():
    return b.band_minimum(0)


@pytest.fixture(scope="module")
def bm1():
    return b.band_minimum(1)


@pytest.fixture(scope="module")
def taylor1(bm1):
    return b.band_taylor(1, bm1, order=8)


@pytest.fixture(scope="module")
def taylor0(bm0):
    return b.band_taylor(0, bm0, order=8)


def test_well_profiles():
    sw = w.WellProfile.simple_well()
    assert sw.gamma0 == 1.0
    assert sw.minima == [(0.0, 1.0, 8.0)]
    dw = w.WellProfile.double_well()
    assert [m[0] for m in dw.minima] == [-1.0, 1.0]
    assert dw.gamma0 == pytest.approx(1.0)
    # (s^2 - 1)^2 + 1 around s = 1: x^4 + 4x^3 + 4x^2 + 1
    assert np.allclose(dw.taylor(1.0, 5), [1.0, 0.0, 4.0, 4.0, 1.0], atol=1e-12)
    d = json.loads(json.dumps(dw.to_dict()))
    assert w.WellProfile.from_dict(d).minima == dw.minima


def test_well_rejects_nonpositive():
    with pytest.raises(ValueError):
        w.WellProfile.from_coeffs([0.0, 0.0, 1.0])


def test_well_negligible_leading_coefficient():
    well = w.WellProfile.from_coeffs([1.0, 0.0, 1.0, 0.0, 5e-324])
    assert well.minima == [(0.0, 1.0, 2.0)]


def test_lambda11_closed_form(bm1, taylor1):
    ex = w.montgomery_expansion(1, w.WellProfile.simple_well(), bm1, band_taylor=taylor1)
    ref = 0.5 * math.sqrt(16.0 * bm1.nu0 * bm1.nu2 / 3.0)
    assert ex.lambda1_of_n[1] == pytest.approx(ref, rel=1e-12)
    assert ex.lambda1_of_n[1] == pytest.approx(1.0942909140397474, rel=1e-6)
    assert ex.lambda1_of_n[3] == pytest.approx(5 * ex.lambda1_of_n[1], rel=1e-12)
    assert ex.lambda0 == pytest.approx(bm1.nu0)


def test_lambda11_double_well_k0(bm0, taylor0):
    ex = w.montgomery_expansion(0, w.WellProfile.double_well(), bm0, band_taylor=taylor0)
    assert ex.well_center == -1.0
    # gamma''(+-1) = 8, exponent 2/(k+2) = 1
    ref = 0.5 * math.sqrt(8.0 * bm0.nu0 * bm0.nu2)
    assert ex.lambda1_of_n[1] == pytest.approx(ref, rel=1e-12)
    assert ex.lambda1_of_n[1] == pytest.approx(1.175608548833901, rel=1e-6)


def test_flat_profile(bm1):
    ex = w.montgomery_expansion(1, w.WellProfile.from_coeffs([2.0]), bm1)
    assert all(v == 0.0 for v in ex.lambda1_of_n.values())
    assert ex.lambda0 == pytest.approx(2 ** (2 / 3) * bm1.nu0)


def test_k_mismatch(bm0):
    with pytest.raises(ValueError):
        w.montgomery_expansion(1, w.WellProfile.simple_well(), bm0)


def test_eikonal_residual_and_structure(bm1, taylor1):
    well = w.WellProfile.simple_well()
    phi = w.eikonal_taylor(1, well, taylor1, 6)
    assert np.max(np.abs(w.eikonal_residual(1, well, taylor1, phi))) < 1e-12
    ex = w.montgomery_expansion(1, well, bm1, band_taylor=taylor1)
    assert phi[2].real == pytest.approx(ex.phi2 / 2, rel=1e-5)
    # even gamma: even orders real, odd orders imaginary
    assert np.all(np.abs(phi[2::2].imag) < 1e-12)
    assert np.all(np.abs(phi[3::2].real) < 1e-12)
    frozen = [0, 0, 0.69429228, 0.03856415j, -0.13970647, -0.06281637j, 0.19497927]
    assert np.allclose(phi, frozen, atol=2e-6)


def test_eikonal_pointwise_root(taylor1):
    # independent route: solve the eikonal relation pointwise by polynomial roots
    well = w.WellProfile.simple_well()
    phi = w.eikonal_taylor(1, well, taylor1, 6)
    c = np.asarray(taylor1, dtype=complex).copy()
    c[1] = 0
    nu0 = c[0].real
    for s in (0.02, 0.05):
        g = 1 + 4 * s * s
        rhs = nu0 * g ** (-2 / 3)
        # sum c_j (i w)^j = rhs, polynomial in w (numpy wants highest degree first)
        poly = np.array([cj * 1j ** j for j, cj in enumerate(c)])
        poly[0] -= rhs
        roots = np.roots(poly[::-1])
        guess = math.sqrt(-(rhs - nu0) / c[2].real)
        wr = roots[np.argmin(np.abs(roots - guess))]
        dphi_root = g ** (1 / 3) * wr
        dphi_series = sum(j * phi[j] * s ** (j - 1) for j in range(1, 7))
        assert abs(dphi_root - dphi_series) < 50 * s ** 6


def test_eikonal_order_guard(taylor1):
    with pytest.raises(ValueError):
        w.eikonal_taylor(1, w.WellProfile.simple_well(), taylor1[:4], 6)


def test_smooth_step():
    x = np.linspace(-1, 2, 301)
    s = w.smooth_step(x)
    assert np.all(s[x <= 0] == 0) and np.all(s[x >= 1] == 1)
    assert np.all(np.diff(s) >= 0)
    mid = w.smooth_step(np.array([0.5]))[0]
    assert mid == pytest.approx(0.5, abs=1e-12)


def test_agmon_single_quad_oracle():
    well = w.WellProfile.simple_well()
    s = np.array([0.0, 0.1, 0.5])
    z = w.agmon_weight(1, well, s)

    def integrand(x):
        return math.sqrt((1 + 4 * x * x) ** (2 / 3) - 1)

    ref = [quad(integrand, 0, si, epsabs=1e-14, epsrel=1e-12)[0] for si in s]
    assert np.allclose(z.z_samples, ref, rtol=1e-7, atol=1e-12)
    assert np.allclose(z.z_samples, [0, 0.008151501276, 0.197261463], rtol=1e-6, atol=1e-12)


def test_agmon_double_closed_form():
    # k = 0: the integrand reduces to |s^2 - 1|, with a closed-form primitive
    well = w.WellProfile.double_well()
    s = np.array([-1.5, -1.0, 0.0, 0.5, 1.0, 1.5])
    z = w.agmon_weight(0, well, s, variant="double", delta=0.5)

    def one(si, s0):
        return abs(quad(lambda x: abs(x * x - 1), s0, si)[0])

    chim = 1 - w.smooth_step((s - 0.25) / 0.25)
    chip = w.smooth_step((s + 0.5) / 0.25)
    ref = [cm * one(si, -1) + cp * one(si, 1) for si, cm, cp in zip(s, chim, chip)]
    assert np.allclose(z.z_samples, ref, rtol=1e-8, atol=1e-12)
    # symmetric, zero at the wells
    assert z.z_samples[1] == 0.0 and z.z_samples[4] == 0.0
    assert z.z_samples[0] == pytest.approx(z.z_samples[-1], rel=1e-12)


def test_agmon_csv(tmp_path):
    z = w.agmon_weight(1, w.WellProfile.simple_well(), np.linspace(-1, 1, 5))
    lines = w.write_agmon_csv(z, tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "s,z" and len(lines) == 6


def test_agmon_variant_errors():
    with pytest.raises(ValueError):
        w.agmon_weight(1, w.WellProfile.double_well(), np.zeros(3), variant="single")
    with pytest.raises(ValueError):
        w.agmon_weight(1, w.WellProfile.simple_well(), np.zeros(3), variant="double")


def _parabola_oracle(c, sig):
    def arc(x):
        return quad(lambda t: math.sqrt(1 + 4 * c * c * t * t), 0, x, epsabs=1e-14)[0]
    x = brentq(lambda t: arc(t) - sig, -10, 10, xtol=1e-15) if sig else 0.0
    return 2 * c / (1 + 4 * c * c * x * x) ** 1.5


def test_parabola_curvature():
    p = w.curvature_profile_parabola(4.0, np.array([0.0, 0.1, 0.2]))
    ref = [_parabola_oracle(4.0, s) for s in (0.0, 0.1, 0.2)]
    assert np.allclose(p.kappa, ref, rtol=1e-10)
    assert p.kappa_max == pytest.approx(8.0)
    assert p.k2 == pytest.approx(24 * 4.0 ** 3, rel=1e-5)


def test_two_bump_curvature():
    coeffs = [-1, 0, 2, 0, -1]
    prof = w.curvature_profile_graph(coeffs, np.linspace(-2, 2, 41), symmetric_max=True)

    def kap(x):
        fp = 4 * x - 4 * x ** 3
        fpp = 4 - 12 * x * x
        return abs(fpp) / (1 + fp * fp) ** 1.5

    r = minimize_scalar(lambda x: -kap(x), bounds=(0.8, 1.5), method="bounded",
                        options={"xatol": 1e-12})
    sig = quad(lambda t: math.sqrt(1 + (4 * t - 4 * t ** 3) ** 2), 0, r.x, epsabs=1e-14)[0]
    assert prof.kappa_max == pytest.approx(-r.fun, rel=1e-9)
    assert sorted(prof.sigma_max) == pytest.approx([-sig, sig], rel=1e-6)
    assert prof.kappa_max == pytest.approx(8.177572488721, rel=1e-9)
    assert prof.k2 == pytest.approx(1731.6874412, rel=1e-5)


def test_camel_coefficients(bm0):
    c1 = b.moment_C1(bm0.ground)
    ex = w.camel_expansion(bm0, c1, 8.0, 1536.0)
    l0, l1, l2, l3 = ex.lambda_terms[1]
    assert l0 == bm0.nu0 and l1 == 0.0
    assert l2 == pytest.approx(-8 * c1)
    assert l2 == pytest.approx(-2.0325373, abs=1e-6)
    assert l3 == pytest.approx(c1 * bm0.nu0 ** 0.25 * math.sqrt(1.5 * 1536), rel=1e-12)
    assert l3 == pytest.approx(10.688641298, rel=1e-6)
    assert ex.lambda_terms[2][3] == pytest.approx(3 * l3)


def test_camel_phase_second_derivative(bm0):
    c1 = b.moment_C1(bm0.ground)
    prof = w.curvature_profile_parabola(4.0, np.linspace(-0.05, 0.05, 5))
    d = 5e-4
    sig = np.array([-d, 0.0, d])
    ex = w.camel_expansion(bm0, c1, prof.kappa_max, prof.k2, kappa=prof, sigma_grid=sig)
    fd = (ex.phi_camel[0] - 2 * ex.phi_camel[1] + ex.phi_camel[2]) / d ** 2
    assert fd == pytest.approx(ex.phi2, rel=1e-4)


def test_camel_rejects_non_maximum(bm0):
    with pytest.raises(ValueError):
        w.camel_expansion(bm0, 0.25, 8.0, -1.0)
    with pytest.raises(ValueError):
        w.camel_expansion(bm0, 0.25, 8.0, 10.0, kappa=lambda s: 1 + np.asarray(s) ** 2,
                          sigma_grid=np.linspace(-1, 1, 5))


def test_expansion_json(bm1, taylor1, tmp_path):
    ex = w.montgomery_expansion(1, w.WellProfile.simple_well(), bm1, band_taylor=taylor1)
    d = json.loads(ex.to_json(tmp_path / "e.json"))
    assert "lambda1_of_n" in d and "phi_taylor" in d
