"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` or ``python tests/test_acceptance.py``.
The long studies (criteria 6 to 9) take several minutes in total.
"""
from __future__ import annotations

import math
import time

import numpy as np
import pytest
from scipy.linalg import eigh

from magwkb import band1d, studies
from magwkb.assemble2d import Grid2D, assemble_camel, assemble_general, assemble_montgomery
from magwkb.eigensolve import sparse_smallest, tridiag_smallest
from magwkb.wkb import WellProfile, eikonal_residual, eikonal_taylor

pytestmark = pytest.mark.acceptance


def _verdicts(rep: studies.StudyReport) -> str:
    parts = []
    for v in rep.verdicts:
        m = v["measured"]
        if isinstance(m, float):
            m = f"{m:.5g}"
        elif isinstance(m, list) and m and isinstance(m[0], float):
            m = "[" + ", ".join(f"{x:.4g}" for x in m) + "]"
        parts.append(f"{v['criterion']}: {m} {'ok' if v['passed'] else 'MISS'}")
    return "; ".join(parts)


def test_criterion_01_band_constants(criterion):
    out, ok = [], True
    for k, ref in ((0, 0.59010), (1, 0.5698)):
        t0 = time.perf_counter()
        bm = band1d.band_minimum(k)
        dt = time.perf_counter() - t0
        good = abs(bm.nu0 - ref) <= 5e-4 and dt < 5.0
        ok &= good
        out.append(f"k={k}: {bm.nu0:.6f} vs {ref} ({dt:.2f} s)")
    assert criterion(1, "band minima", ok, "; ".join(out))


def test_criterion_02_moment_constant(criterion):
    t0 = time.perf_counter()
    bm = band1d.band_minimum(0)
    c1 = band1d.moment_C1(bm.ground)
    ratio = bm.nu2 / 2 / (3 * c1 * math.sqrt(bm.nu0))
    dt = time.perf_counter() - t0
    literal = abs(c1 - 0.873043) <= 1e-3
    ident = abs(ratio - 1) <= 1e-3
    detail = (f"C1 = {c1:.6f} vs literal 0.873043 {'ok' if literal else 'MISS'}; "
              f"identity ratio {ratio:.6f} {'ok' if ident else 'MISS'}; "
              f"u(0) = {bm.ground.eigenfunction[0]:.6f}; {dt:.2f} s")
    assert criterion(2, "moment constant C1 and identity", literal and ident and dt < 10, detail)


def test_criterion_03_lemma58(criterion):
    t0 = time.perf_counter()
    r = band1d.moment_check_lemma58(band1d.band_minimum(0).ground)
    r = {key: r[key] for key in ("first", "second", "third", "c1")}
    dt = time.perf_counter() - t0
    ok = all(v <= 1e-3 for v in r.values()) and dt < 30
    detail = ", ".join(f"{k} {v:.1e}" for k, v in r.items()) + f"; {dt:.2f} s"
    assert criterion(3, "four moment identities", ok, detail)


def test_criterion_04_feynman_hellmann(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = {}
    for k in (0, 1):
        g = band1d.default_grid(k)
        d = 1e-4
        errs = []
        for z in rng.uniform(0.0, 2.0, 20):
            fd = (band1d.band_value(k, z + d, g).nu - band1d.band_value(k, z - d, g).nu) / (2 * d)
            fh = band1d.band_derivative_fh(k, band1d.band_value(k, z, g))
            errs.append(abs(fh - fd))
        worst[k] = max(errs)
    dt = time.perf_counter() - t0
    ok = all(v <= 1e-5 for v in worst.values()) and dt < 30
    detail = ", ".join(f"k={k} max {v:.1e}" for k, v in worst.items()) + f"; {dt:.1f} s"
    assert criterion(4, "FH derivative vs central difference", ok, detail)


def test_criterion_05_eigensolver_oracles(criterion):
    t0 = time.perf_counter()
    parts, ok = [], True
    # harmonic oscillator on [-12, 12], n = 4001; n = 16001 reported for comparison only
    errs = {}
    for n in (4001, 16001):
        x = np.linspace(-12, 12, n)
        dx = x[1] - x[0]
        xi = x[1:-1]
        r = tridiag_smallest(2 / dx ** 2 + xi ** 2, np.full(xi.size - 1, -1 / dx ** 2), 3)
        errs[n] = np.abs(r.eigenvalues - [1, 3, 5])
    ok &= bool(np.all(errs[4001] <= 1e-5))
    parts.append("oscillator n=4001 errors " + " ".join(f"{e:.1e}" for e in errs[4001])
                 + f" (n=16001 max {errs[16001].max():.1e})")
    # sparse against dense, dim 1600
    g = Grid2D(-1.0, 1.0, -4.0, 4.0, 42, 42)
    H = assemble_montgomery(1, WellProfile.simple_well(), 0.1, g, gauge_shift=0.35)
    rs = sparse_smallest(H, 4, shift=0.0)
    ref = eigh(H.to_csr().toarray(), eigvals_only=True, subset_by_index=[0, 3])
    err = float(np.max(np.abs(rs.eigenvalues - ref)))
    ok &= err <= 1e-10 and H.dim <= 2000
    parts.append(f"dense oracle dim {H.dim}: {err:.1e}")
    # Kronecker sum: gamma = 0 separates into two 1D problems
    h = 0.3
    g = Grid2D(-1.0, 1.5, -2.0, 2.0, 152, 122)
    H = assemble_general([[0.0]], h, g)
    l2 = sparse_smallest(H, 1, shift=0.0).eigenvalues[0]
    ns, nt = g.shape
    ls = tridiag_smallest(np.full(ns, 2 * h * h / g.ds ** 2), np.full(ns - 1, -h * h / g.ds ** 2), 1)
    lt = tridiag_smallest(np.full(nt, 2 / g.dt ** 2), np.full(nt - 1, -1 / g.dt ** 2), 1)
    err = abs(l2 - ls.eigenvalues[0] - lt.eigenvalues[0])
    ok &= err <= 1e-10
    parts.append(f"Kronecker {err:.1e}")
    # constant field, s in [-3, 3], t in [-12, 12], 200 x 200 nodes
    g = Grid2D(-3.0, 3.0, -12.0, 12.0, 200, 200)
    lam = sparse_smallest(assemble_general(lambda S, T: -T, 0.25, g), 1, shift=0.5).eigenvalues[0]
    ok &= abs(lam - 1) <= 1e-3
    parts.append(f"Landau h=1/4: {lam:.6f}")
    dt = time.perf_counter() - t0
    ok &= dt < 120
    assert criterion(5, "eigensolver oracles", ok, "; ".join(parts) + f"; {dt:.1f} s")


def test_criterion_06_simple_well(criterion, tmp_path):
    cfg = studies.default_config("simple-well", output_dir=str(tmp_path))
    rep = studies.run_study(cfg)
    assert criterion(6, "simple well sweep", rep.passed, _verdicts(rep) + f"; {rep.runtime:.0f} s")


def test_criterion_07_double_well(criterion, tmp_path):
    parts, ok = [], True
    for k in (0, 1):
        rep = studies.run_study(studies.default_config("double-well", k=k, output_dir=str(tmp_path)))
        ok &= rep.passed
        pb = rep.extra.get("stretch_bracket", {})
        parts.append(_verdicts(rep) + f" (plateau {pb.get('plateau', float('nan')):.4f}, "
                     f"{rep.runtime:.0f} s)")
    assert criterion(7, "double-well tunneling", ok, " | ".join(parts))


def test_criterion_08_camel_one_bump(criterion, tmp_path):
    rep = studies.run_study(studies.default_config("camel-1bump", output_dir=str(tmp_path)))
    assert criterion(8, "camel one bump", rep.passed, _verdicts(rep) + f"; {rep.runtime:.0f} s")


def test_criterion_09_camel_two_bumps(criterion, tmp_path):
    rep = studies.run_study(studies.default_config("camel-2bump", output_dir=str(tmp_path)))
    detail = _verdicts(rep) + f"; pointwise plateau {rep.extra.get('plateau_pointwise', float('nan')):.3f}"
    assert criterion(9, "camel two bumps", rep.passed, detail + f"; {rep.runtime:.0f} s")


def test_criterion_10_agmon(criterion, tmp_path):
    first = studies.run_study(studies.default_config("agmon", output_dir=str(tmp_path),
                                                     dump_vectors=True))
    src = str(tmp_path / "agmon_eigs")
    rep = studies.run_study(studies.default_config("agmon", params={"source": src}))
    same = rep.extra["ratio_min"] == first.extra["ratio_min"]
    ok = rep.passed and same and rep.runtime < 60
    detail = (_verdicts(rep) + f"; from stored vectors in {rep.runtime:.2f} s; "
              f"asymmetry {rep.extra['asymmetry']:.1e}")
    assert criterion(10, "Agmon lower bound", ok, detail)


def test_criterion_11_structural(criterion):
    t0 = time.perf_counter()
    parts, ok = [], True
    ops = {
        "montgomery k=0": assemble_montgomery(0, WellProfile.double_well(), 0.1,
                                              Grid2D.box(2.0, (0.0, 6.0), 61, 41, True), 0.77),
        "montgomery k=1": assemble_montgomery(1, WellProfile.simple_well(), 0.1,
                                              Grid2D(-1.0, 1.0, -5.0, 5.0, 61, 61)),
        "camel": assemble_camel(lambda s: 8 - 20 * s * s, 0.77, 0.01,
                                Grid2D.box(0.5, (0.0, 5.0), 41, 41, True)),
    }
    defect = max(abs(H.to_csr() - H.to_csr().getH()).max() for H in ops.values())
    ok &= defect == 0.0
    parts.append(f"Hermitian defect {defect:g}")
    cfg = studies.default_config("domain-convergence", h_list=[0.1],
                                 grid={"boxes": [[0.4, 3.0], [0.6, 4.0], [0.8, 5.0]]})
    rep = studies.run_study(cfg)
    lam = np.array(rep.extra["lambdas"])
    mono = bool(np.all(np.diff(lam, axis=0) <= 0))
    ok &= mono
    parts.append("box monotone " + ("ok" if mono else "MISS") + f" {lam[:, 0].round(10).tolist()}")
    worst = 0.0
    for k, well in ((1, WellProfile.simple_well()), (0, WellProfile.double_well())):
        bm = band1d.band_minimum(k)
        tay = band1d.band_taylor(k, bm, order=8)
        phi = eikonal_taylor(k, well, tay, 6)
        worst = max(worst, float(np.max(np.abs(eikonal_residual(k, well, tay, phi)))))
    ok &= worst <= 1e-12
    parts.append(f"eikonal residual through order 6 {worst:.1e}")
    dt = time.perf_counter() - t0
    ok &= dt < 60
    assert criterion(11, "structural invariants", ok, "; ".join(parts) + f"; {dt:.1f} s")


if __name__ == "__main__":  # pragma: no cover
    import sys
    import tempfile
    from pathlib import Path

    def record(num, title, passed, detail):
        print(f"{'PASS' if passed else 'FAIL'}  criterion {num:>2}: {title} | {detail}", flush=True)
        return passed

    failed = 0
    for name, fn in sorted((n, f) for n, f in globals().items() if n.startswith("test_criterion")):
        kwargs = {"criterion": record}
        if "tmp_path" in fn.__code__.co_varnames[: fn.__code__.co_argcount]:
            kwargs["tmp_path"] = Path(tempfile.mkdtemp())
        try:
            fn(**kwargs)
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
