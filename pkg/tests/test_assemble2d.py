import json

import numpy as np
import pytest
import scipy.sparse as sp

from magwkb import band1d as b
from magwkb.assemble2d import (
    Grid2D,
    HermitianSparse,
    WeightPositivityError,
    assemble_camel,
    assemble_camel_physical,
    assemble_general,
    assemble_montgomery,
)
from magwkb.eigensolve import sparse_smallest
from magwkb.wkb import WellProfile

THETA0 = 0.5901079687072803


def _herm_defect(H: HermitianSparse) -> float:
    A = H.to_csr()
    return abs(A - A.getH()).max() if A.nnz else 0.0


def test_grid_rules():
    with pytest.raises(ValueError):
        Grid2D(0, 1, 0, 1, 7, 10)
    with pytest.raises(ValueError):
        Grid2D(0, 1, 0, 1, 10, 10, {"s_min": "neumann"})
    g = Grid2D.box(1.0, (0.0, 2.0), 11, 9, neumann_bottom=True)
    assert g.shape == (9, 8)
    assert g.t_weights[0] == 0.5 and np.all(g.t_weights[1:] == 1)
    assert Grid2D.from_dict(json.loads(json.dumps(g.to_dict()))) == g


def test_free_laplacian_dirichlet_exact():
    g = Grid2D(-1, 1, -1, 1, 12, 10)
    h = 0.3
    H = assemble_general([[0.0]], h, g)
    ev = np.linalg.eigvalsh(H.to_csr().toarray())
    i = np.arange(1, 11)
    j = np.arange(1, 9)
    ls = h * h * (2 - 2 * np.cos(np.pi * i / 11)) / g.ds ** 2
    lt = (2 - 2 * np.cos(np.pi * j / 9)) / g.dt ** 2
    ref = np.sort(np.add.outer(ls, lt).ravel())
    assert np.allclose(ev, ref, rtol=1e-12)


def test_free_laplacian_neumann_exact():
    g = Grid2D.box(1.0, (0.0, 1.0), 10, 12, neumann_bottom=True)
    H = assemble_general([[0.0]], 1.0, g)
    ev = np.linalg.eigvalsh(H.to_csr().toarray())
    N = 11
    i = np.arange(1, 9)
    m = np.arange(1, N + 1)
    ls = (2 - 2 * np.cos(np.pi * i / 9)) / g.ds ** 2
    lt = (2 - 2 * np.cos((m - 0.5) * np.pi / N)) / g.dt ** 2
    ref = np.sort(np.add.outer(ls, lt).ravel())
    assert np.allclose(ev, ref, rtol=1e-12)
    # the Neumann coupling after symmetrization
    A = H.to_csr()
    assert A[0, 1] == pytest.approx(-np.sqrt(2) / g.dt ** 2)


def test_link_entries():
    g = Grid2D(-1, 1, -1, 1, 10, 10)
    h = 0.2
    H = assemble_general(lambda S, T: 0.7 + S, h, g)
    A = H.to_csr()
    nT = g.shape[1]
    s = g.s_nodes
    val = A[0, nT]
    ref = -h * h / g.ds ** 2 - 1j * h * (0.7 + s[0] + 0.7 + s[1]) / (2 * g.ds)
    assert val == pytest.approx(ref, rel=1e-14)
    assert A[0, 0].real == pytest.approx(2 * h * h / g.ds ** 2 + (0.7 + s[0]) ** 2 + 2 / g.dt ** 2)
    assert _herm_defect(H) == 0.0


def test_montgomery_validation():
    well = WellProfile.simple_well()
    with pytest.raises(ValueError):
        assemble_montgomery(0, well, 0.1, Grid2D(-1, 1, -1, 1, 10, 10))
    with pytest.raises(ValueError):
        assemble_montgomery(1, well, 0.1, Grid2D.box(1, (0, 1), 10, 10, neumann_bottom=True))
    with pytest.raises(ValueError):
        assemble_montgomery(1, well, -0.1, Grid2D(-1, 1, -1, 1, 10, 10))


def test_montgomery_flat_field_half_plane():
    # k = 0, gamma = 1: half-plane Neumann problem, bottom close to Theta0 for a wide box
    well = WellProfile.from_coeffs([1.0])
    h = 0.1
    g = Grid2D.box(3.0, (0.0, 8.0), 241, 161, neumann_bottom=True)
    xi = b.band_minimum(0).zeta0
    H = assemble_montgomery(0, well, h, g, gauge_shift=xi)
    r = sparse_smallest(H, 1, shift=0.0)
    assert r.eigenvalues[0] > THETA0 - 1e-3
    assert r.eigenvalues[0] == pytest.approx(THETA0, abs=5e-3)


def test_gauge_shift_nearly_unitary():
    well = WellProfile.simple_well()
    g = Grid2D(-1.0, 1.0, -5.0, 5.0, 121, 161)
    h = 0.1
    xi = 0.3
    l0 = sparse_smallest(assemble_montgomery(1, well, h, g), 2, shift=0.0).eigenvalues
    l1 = sparse_smallest(assemble_montgomery(1, well, h, g, gauge_shift=xi), 2, shift=0.0).eigenvalues
    # not exactly unitary on the grid; difference is a discretization error O(ds^2)
    assert np.allclose(l0, l1, atol=5e-3)


def test_export_roundtrip(tmp_path):
    g = Grid2D.box(1.0, (0.0, 1.0), 9, 9, neumann_bottom=True)
    H = assemble_camel(lambda s: 1 + 0 * s, 0.77, 0.1, g)
    out = H.export(tmp_path / "m.txt", note="x")
    data = np.loadtxt(out["matrix"])
    A = sp.csr_matrix((data[:, 2] + 1j * data[:, 3], (data[:, 0].astype(int), data[:, 1].astype(int))),
                      shape=(H.dim, H.dim))
    assert abs(A - H.to_csr()).max() == 0.0
    side = json.loads(out["sidecar"].read_text())
    assert side["dim"] == H.dim and side["note"] == "x" and side["bc"]["t_min"] == "neumann"
    assert np.array_equal(np.loadtxt(out["mass"]), H.mass)


def test_camel_flat_equals_general():
    g = Grid2D.box(1.0, (0.0, 3.0), 12, 15, neumann_bottom=True)
    z = 0.768
    Hc = assemble_camel(lambda s: 0 * s, z, 0.2, g)
    Hg = assemble_general(lambda S, T: z - T, 0.2, g)
    assert abs(Hc.to_csr() - Hg.to_csr()).max() < 1e-12
    assert np.allclose(Hc.mass, 1.0)


def test_camel_weight_positivity():
    g = Grid2D.box(1.0, (0.0, 10.0), 12, 15, neumann_bottom=True)
    with pytest.raises(WeightPositivityError):
        assemble_camel(lambda s: 2 + 0 * s, 0.77, 0.1, g)


def test_camel_hermitian_and_gershgorin():
    g = Grid2D.box(1.0, (0.0, 4.0), 21, 21, neumann_bottom=True)
    H = assemble_camel(lambda s: 1 - s * s, 0.77, 0.05, g)
    assert _herm_defect(H) < 1e-14
    r = sparse_smallest(H, 1, shift=H.gershgorin_lower() - 1)
    assert r.eigenvalues[0] >= H.gershgorin_lower()


def test_physical_camel_half_plane():
    hbar = 0.01
    g = Grid2D.box(0.6, (0.0, 8 * np.sqrt(hbar)), 121, 41, neumann_bottom=True)
    xi = b.band_minimum(0).zeta0
    H = assemble_camel_physical([0.0], hbar, g, beta=xi * np.sqrt(hbar))
    assert _herm_defect(H) < 1e-14
    lam = sparse_smallest(H, 1, shift=0.0).eigenvalues[0]
    # flat boundary: band bottom plus the Dirichlet box in s of scaled width 12
    bm = b.band_minimum(0)
    ref = bm.nu0 + 0.5 * bm.nu2 * (np.pi / 12) ** 2
    assert lam / hbar == pytest.approx(ref, abs=5e-3)
