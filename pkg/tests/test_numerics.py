import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from cuspsteklov import (CuspDomain, CuspProfile, NonConvergenceError,
                         NotSPDError, SizeField, cg_solve, factor_spd,
                         generate, mass, pencil_smallest, stiffness, sym_eigen)


@pytest.fixture(scope="module")
def fem_matrix():
    dom = CuspDomain(CuspProfile.power(2.0))
    mesh = generate(dom, SizeField(h_max=0.3))
    return (stiffness(mesh) + mass(mesh)).tocsr()


class TestSPDFactor:
    def test_solve_matches_direct(self, fem_matrix):
        rng = np.random.default_rng(3)
        b = rng.standard_normal(fem_matrix.shape[0])
        x = factor_spd(fem_matrix).solve(b)
        ref = spsolve(fem_matrix.tocsc(), b)
        # the graded mesh pushes the condition number near 1e8, so solution
        # agreement well beyond that is not on the table
        assert np.linalg.norm(x - ref) <= 1e-7 * np.linalg.norm(ref)

    def test_residual_after_refinement(self, fem_matrix):
        rng = np.random.default_rng(5)
        b = rng.standard_normal(fem_matrix.shape[0])
        x = factor_spd(fem_matrix).solve(b)
        res = np.linalg.norm(fem_matrix @ x - b)
        assert res <= 1e-9 * np.linalg.norm(b)

    def test_matrix_rhs(self, fem_matrix):
        rng = np.random.default_rng(7)
        b = rng.standard_normal((fem_matrix.shape[0], 3))
        x = factor_spd(fem_matrix).solve(b)
        assert x.shape == b.shape
        assert np.linalg.norm(fem_matrix @ x - b) <= 1e-9 * np.linalg.norm(b)

    def test_rejects_indefinite(self):
        a = sp.diags([1.0, -1.0, 2.0]).tocsc()
        with pytest.raises(NotSPDError):
            factor_spd(a)

    def test_rejects_semidefinite(self):
        # stiffness alone has the constants in its kernel
        a = sp.diags([1.0, 2.0, 0.0]).tocsc()
        with pytest.raises(NotSPDError):
            factor_spd(a)

    def test_logdet(self):
        rng = np.random.default_rng(9)
        b = rng.standard_normal((6, 6))
        a = b @ b.T + 6.0 * np.eye(6)
        f = factor_spd(sp.csc_matrix(a))
        assert abs(f.logdet() - np.linalg.slogdet(a)[1]) <= 1e-10


class TestCG:
    def test_matches_direct(self, fem_matrix):
        rng = np.random.default_rng(11)
        b = rng.standard_normal(fem_matrix.shape[0])
        x = cg_solve(fem_matrix, b, rtol=1e-12)
        ref = spsolve(fem_matrix.tocsc(), b)
        assert np.linalg.norm(x - ref) <= 1e-8 * np.linalg.norm(ref)

    def test_kernel_deflation_on_pure_stiffness(self):
        dom = CuspDomain(CuspProfile.power(2.0))
        mesh = generate(dom, SizeField(h_max=0.35))
        k = stiffness(mesh)
        n = k.shape[0]
        ones = np.ones((n, 1))
        rng = np.random.default_rng(13)
        b = rng.standard_normal(n)
        b -= b.mean()  # compatible right-hand side
        x = cg_solve(k, b, rtol=1e-11, kernel=ones)
        assert np.linalg.norm(k @ x - b) <= 1e-8 * np.linalg.norm(b)
        assert abs(x.sum()) <= 1e-8 * np.linalg.norm(x) * np.sqrt(n)

    def test_raises_on_stall(self, fem_matrix):
        b = np.ones(fem_matrix.shape[0])
        with pytest.raises(NonConvergenceError):
            cg_solve(fem_matrix, b, rtol=1e-14, maxiter=2)

    def test_raises_on_negative_curvature(self):
        a = -np.eye(4)
        with pytest.raises(NotSPDError):
            cg_solve(a, np.ones(4))

    def test_callable_operator(self):
        a = np.diag([1.0, 2.0, 4.0])
        x = cg_solve(lambda v: a @ v, np.array([1.0, 2.0, 4.0]), rtol=1e-13)
        assert np.allclose(x, 1.0, atol=1e-10)


class TestSymEigen:
    def test_plain(self):
        vals, vecs = sym_eigen(np.diag([3.0, 1.0, 2.0]))
        assert np.allclose(vals, [1.0, 2.0, 3.0])
        assert np.allclose(np.abs(vecs.T @ vecs), np.eye(3), atol=1e-12)

    def test_generalized(self):
        a = np.diag([1.0, 2.0, 3.0])
        m = np.diag([1.0, 4.0, 9.0])
        vals, vecs = sym_eigen(a, m, k=2)
        assert np.allclose(vals, [1.0 / 3.0, 0.5])
        for j in range(2):
            x = vecs[:, j]
            assert abs(x @ m @ x - 1.0) <= 1e-12

    def test_dense_cap(self):
        big = sp.eye(4001, format="csr")
        with pytest.raises(ValueError, match="cap"):
            sym_eigen(big)


class TestPencilSmallest:
    def test_matches_lapack_on_friendly_pencil(self):
        rng = np.random.default_rng(17)
        b = rng.standard_normal((12, 12))
        s = b @ b.T + 12.0 * np.eye(12)
        c = rng.standard_normal((12, 12))
        m = c @ c.T + np.eye(12)
        lam, x = pencil_smallest(s, m, 4)
        ref = sla.eigh(s, m, eigvals_only=True)[:4]
        assert np.allclose(lam, ref, rtol=1e-10)
        for j in range(4):
            res = s @ x[:, j] - lam[j] * (m @ x[:, j])
            assert np.linalg.norm(res) <= 1e-8 * np.linalg.norm(s @ x[:, j])
            assert abs(x[:, j] @ m @ x[:, j] - 1.0) <= 1e-8

    def test_survives_wild_mass_scaling(self):
        # a mass entry twenty-four orders below the rest must not pollute
        # the small eigenvalues; this is the cusp-tip situation
        s = np.eye(3)
        m = np.diag([1e-24, 1.0, 2.0])
        lam, _ = pencil_smallest(s, m, 3)
        assert abs(lam[0] - 0.5) <= 1e-12
        assert abs(lam[1] - 1.0) <= 1e-12
        assert abs(lam[2] - 1e24) <= 1e10

    def test_rejects_indefinite_stiffness(self):
        s = np.diag([1.0, -1.0])
        with pytest.raises(NotSPDError):
            pencil_smallest(s, np.eye(2), 1)

    def test_k_clipped_to_dimension(self):
        lam, x = pencil_smallest(np.eye(3), np.eye(3), 10)
        assert lam.shape == (3,)
        assert x.shape == (3, 3)
