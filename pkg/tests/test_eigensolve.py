import numpy as np
import pytest
import scipy.sparse as sp
from scipy.linalg import eigh, eigh_tridiagonal

from magwkb import kernels
from magwkb.eigensolve import (
    ConvergenceError,
    ShiftError,
    load_eigen_result,
    sparse_smallest,
    tridiag_smallest,
)

BACKENDS = ["python"]
try:
    kernels.get_backend("cython")
    BACKENDS.append("cython")
except ImportError:  # pragma: no cover
    pass


def _random_hermitian(n, seed, density=0.02):
    rng = np.random.default_rng(seed)
    R = sp.random(n, n, density=density, random_state=rng, dtype=float)
    I = sp.random(n, n, density=density, random_state=rng, dtype=float)
    A = (R + 1j * I)
    A = A + A.getH() + sp.diags(rng.uniform(0, 10, n))
    return A.tocsr()


@pytest.mark.parametrize("backend", BACKENDS)
def test_tridiag_against_scipy(backend):
    rng = np.random.default_rng(3)
    d = rng.normal(size=500) + 4
    e = rng.normal(size=499)
    r = tridiag_smallest(d, e, 6, backend=backend)
    ref = eigh_tridiagonal(d, e, eigvals_only=True)[:6]
    assert np.allclose(r.eigenvalues, ref, atol=1e-11)
    assert np.all(r.residuals < 1e-10)
    V = r.eigenvectors
    assert np.allclose(V.conj().T @ V, np.eye(6), atol=1e-10)


def test_backends_agree():
    if len(BACKENDS) < 2:
        pytest.skip("compiled extension not built")
    rng = np.random.default_rng(5)
    d = rng.uniform(0, 3, 300)
    e2 = rng.uniform(0, 1, 299)
    py, cy = kernels.get_backend("python"), kernels.get_backend("cython")
    for x in np.linspace(-1, 5, 41):
        assert py.sturm_count(d, e2, x) == cy.sturm_count(d, e2, x)


def test_tridiag_split_matrix_degenerate():
    # zero coupling splits the matrix into two identical blocks: doubled eigenvalues
    d = np.tile(np.arange(1.0, 51.0), 2)
    e = np.ones(99) * 0.0
    r = tridiag_smallest(d, e, 4)
    assert np.allclose(r.eigenvalues, [1, 1, 2, 2], atol=1e-12)
    V = r.eigenvectors
    assert np.allclose(V.conj().T @ V, np.eye(4), atol=1e-10)


def test_sparse_complex_against_dense():
    A = _random_hermitian(300, 1)
    r = sparse_smallest(A, 5, shift=-50.0, tol=1e-10)
    ref = eigh(A.toarray(), eigvals_only=True)[:5]
    assert np.allclose(r.eigenvalues, ref, atol=1e-9)
    assert r.meta["inertia_certified"]


def test_sparse_with_mass():
    A = _random_hermitian(200, 2)
    m = np.random.default_rng(4).uniform(0.5, 2.0, 200)
    r = sparse_smallest(A, 4, shift=-100.0, mass=m)
    ref = eigh(A.toarray(), np.diag(m), eigvals_only=True)[:4]
    assert np.allclose(r.eigenvalues, ref, atol=1e-9)
    X = r.eigenvectors
    assert np.allclose(X.conj().T @ (m[:, None] * X), np.eye(4), atol=1e-9)


def test_sparse_multiplicity_recovered():
    # two decoupled copies: each eigenvalue has multiplicity two
    B = sp.diags([np.full(149, -1.0), np.full(150, 2.0), np.full(149, -1.0)], [-1, 0, 1])
    A = sp.block_diag([B, B]).tocsr()
    r = sparse_smallest(A, 4, shift=-0.1)
    ref = np.sort(np.linalg.eigvalsh(B.toarray()))[:2]
    assert np.allclose(r.eigenvalues, np.repeat(ref, 2), atol=1e-10)


def test_shift_above_spectrum():
    A = _random_hermitian(120, 6)
    lo = eigh(A.toarray(), eigvals_only=True)[0]
    with pytest.raises(ShiftError):
        sparse_smallest(A, 2, shift=lo + 0.5)


def test_convergence_error_carries_result():
    A = _random_hermitian(400, 7, density=0.05)
    with pytest.raises(ConvergenceError) as exc:
        sparse_smallest(A, 8, shift=-60.0, tol=1e-30, max_iter=40, certify=False)
    assert exc.value.result is not None
    assert exc.value.result.n == 8


def test_save_load_roundtrip(tmp_path):
    A = _random_hermitian(150, 8)
    r = sparse_smallest(A, 3, shift=-60.0)
    r.save(tmp_path / "eigs_000", vectors=True)
    raw = np.fromfile(tmp_path / "eigs_000.vec", dtype="<c16").reshape(3, -1).T
    assert np.array_equal(raw, r.eigenvectors)
    back = load_eigen_result(tmp_path / "eigs_000")
    assert np.array_equal(back.eigenvalues, r.eigenvalues)
    assert np.array_equal(back.eigenvectors, r.eigenvectors)


def test_seed_reproducible():
    A = _random_hermitian(250, 9)
    a = sparse_smallest(A, 3, shift=-60.0, seed=11)
    b = sparse_smallest(A, 3, shift=-60.0, seed=11)
    assert np.array_equal(a.eigenvalues, b.eigenvalues)
