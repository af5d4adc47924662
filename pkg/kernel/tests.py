import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal

from .exceptions import IoError, NegativeSpectrum, NotSPD, ShapeMismatch
from .matrixmarket import read_header, read_matrix, write_matrix
from .models import SpdStatus, SymMatrix
from .utils import (
    cholesky, energy_norm, generalized_sym_eig, inv_sqrt, lambda_min_positive,
    null_space_basis, numeric_rank, product_norm_bound, pseudo_inverse, spectrum_of_spsd_product,
    sym_eig, sym_sqrt,
)


def tridiag(n, a=-1.0, b=2.0):
    return np.diag(np.full(n, b)) + np.diag(np.full(n - 1, a), 1) + np.diag(np.full(n - 1, a), -1)


def random_spd(n, seed):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, n))
    return G @ G.T + n * np.eye(n)


class SymMatrixTest(SimpleTestCase):
    def test_symmetrized_on_construction(self):
        A = SymMatrix([[1.0, 2.0], [4.0, 3.0]])
        assert_array_equal(A.entries, [[1.0, 3.0], [3.0, 3.0]])
        self.assertEqual(A.spd_checked, SpdStatus.UNKNOWN)

    def test_entries_are_read_only(self):
        A = SymMatrix(np.eye(2))
        with self.assertRaises(ValueError):
            A.entries[0, 0] = 5.0

    def test_rejects_non_square(self):
        with self.assertRaises(ShapeMismatch):
            SymMatrix(np.zeros((2, 3)))


class CholeskyTest(SimpleTestCase):
    def test_identity(self):
        assert_allclose(cholesky(SymMatrix.identity(3)), np.eye(3))

    def test_two_by_two(self):
        A = SymMatrix([[4.0, 2.0], [2.0, 3.0]])
        L = cholesky(A)
        assert_allclose(L, [[2.0, 0.0], [1.0, np.sqrt(2.0)]], atol=1e-15)
        assert_allclose(L @ L.T, A.entries, atol=1e-10 * A.max_abs)
        self.assertEqual(A.spd_checked, SpdStatus.VERIFIED)

    def test_indefinite(self):
        A = SymMatrix([[1.0, 2.0], [2.0, 1.0]])
        with self.assertRaises(NotSPD):
            cholesky(A)
        self.assertEqual(A.spd_checked, SpdStatus.REJECTED)

    def test_consistent_with_eigenvalues(self):
        for seed in range(5):
            A = SymMatrix(random_spd(6, seed))
            cholesky(A)
            self.assertGreater(sym_eig(A).lambda_min, 0.0)


class SymEigTest(SimpleTestCase):
    def test_diagonal(self):
        eig = sym_eig(SymMatrix.diag([3.0, 1.0, 2.0]))
        assert_allclose(eig.values, [1.0, 2.0, 3.0])

    def test_tridiagonal_analytic(self):
        eig = sym_eig(tridiag(3))
        assert_allclose(eig.values, [2 - np.sqrt(2), 2.0, 2 + np.sqrt(2)], atol=1e-13)

    def test_rank_one(self):
        v = np.array([1.0, 2.0])
        assert_allclose(sym_eig(np.outer(v, v)).values, [0.0, 5.0], atol=1e-13)

    def test_residual_bounds(self):
        for n in (2, 5, 9, 16):
            A = SymMatrix(random_spd(n, n) - 2.0 * n * np.eye(n))
            eig = sym_eig(A)
            self.assertTrue(np.all(np.diff(eig.values) >= 0))
            Q = eig.vectors
            self.assertLessEqual(np.max(np.abs(Q.T @ Q - np.eye(n))), 1e-12 * n)
            self.assertLessEqual(np.max(np.abs(A.entries - eig.reconstruct())), 1e-10 * A.max_abs)

    def test_matches_poisson_formula(self):
        n = 31
        k = np.arange(1, n + 1)
        assert_allclose(sym_eig(tridiag(n)).values, np.sort(2 - 2 * np.cos(k * np.pi / (n + 1))), atol=1e-12)


class PseudoInverseTest(SimpleTestCase):
    def test_diag(self):
        assert_allclose(pseudo_inverse(SymMatrix.diag([2.0, 0.0])).entries, np.diag([0.5, 0.0]))

    def test_identity(self):
        assert_allclose(pseudo_inverse(SymMatrix.identity(4)).entries, np.eye(4), atol=1e-14)

    def test_projector_is_own_pseudo_inverse(self):
        rng = np.random.default_rng(3)
        Q, _ = np.linalg.qr(rng.standard_normal((5, 2)))
        proj = SymMatrix(Q @ Q.T)
        assert_allclose(pseudo_inverse(proj).entries, proj.entries, atol=1e-10)

    def test_double_pseudo_inverse(self):
        rng = np.random.default_rng(4)
        B = rng.standard_normal((6, 3))
        A = SymMatrix(B @ B.T)
        Ap = pseudo_inverse(A)
        assert_allclose(A.entries @ Ap.entries @ A.entries, A.entries, atol=1e-8 * A.max_abs)
        assert_allclose(pseudo_inverse(Ap).entries, A.entries, atol=1e-8 * A.max_abs)

    def test_negative_spectrum(self):
        with self.assertRaises(NegativeSpectrum):
            pseudo_inverse(SymMatrix.diag([1.0, -1.0]))


class NumericRankTest(SimpleTestCase):
    def test_examples(self):
        self.assertEqual(numeric_rank(np.eye(3)), 3)
        self.assertEqual(numeric_rank(np.zeros((3, 2))), 0)
        self.assertEqual(numeric_rank(np.array([[1.0, 1.0], [1.0, 1.0], [0.0, 0.0]])), 1)

    def test_rank_plus_nullity(self):
        rng = np.random.default_rng(5)
        B = rng.standard_normal((7, 3)) @ rng.standard_normal((3, 5))
        self.assertEqual(numeric_rank(B) + null_space_basis(B).shape[1], 5)
        self.assertEqual(numeric_rank(B), 3)

    def test_roundoff_product_has_rank_zero_against_factor_scale(self):
        noise = 1e-17 * np.eye(4, 2)
        self.assertEqual(numeric_rank(noise), 2)
        self.assertEqual(numeric_rank(noise, scale=1.0), 0)
        self.assertEqual(numeric_rank(np.eye(3), scale=1.0), 3)
        self.assertEqual(numeric_rank(np.diag([1.0, 1e-3]), scale=10.0), 2)

    def test_product_norm_bound(self):
        self.assertAlmostEqual(product_norm_bound(2.0 * np.eye(3), np.diag([1.0, 5.0, 3.0])), 10.0)


class EnergyNormTest(SimpleTestCase):
    def test_examples(self):
        self.assertEqual(energy_norm(np.zeros(2), SymMatrix.identity(2)), 0.0)
        self.assertAlmostEqual(energy_norm(np.array([3.0, 4.0]), SymMatrix.identity(2)), 5.0)
        self.assertAlmostEqual(energy_norm(np.ones(2), SymMatrix.diag([4.0, 9.0])), np.sqrt(13.0))

    def test_square_matches_quadratic_form(self):
        rng = np.random.default_rng(6)
        A = SymMatrix(random_spd(5, 6))
        v = rng.standard_normal(5)
        assert_allclose(energy_norm(v, A) ** 2, v @ (A.entries @ v), rtol=1e-12)

    def test_requires_spd(self):
        with self.assertRaises(NotSPD):
            energy_norm(np.ones(2), SymMatrix([[1.0, 2.0], [2.0, 1.0]]))


class SquareRootTest(SimpleTestCase):
    def test_examples(self):
        assert_allclose(sym_sqrt(SymMatrix.identity(3)).entries, np.eye(3), atol=1e-14)
        assert_allclose(sym_sqrt(SymMatrix.diag([4.0, 9.0])).entries, np.diag([2.0, 3.0]))
        assert_allclose(inv_sqrt(SymMatrix.diag([4.0, 9.0])).entries, np.diag([0.5, 1.0 / 3.0]))

    def test_random_spd(self):
        A = SymMatrix(random_spd(5, 7))
        R = sym_sqrt(A).entries
        self.assertLessEqual(np.max(np.abs(R @ R - A.entries)), 1e-9 * A.max_abs)
        Ri = inv_sqrt(A).entries
        assert_allclose(Ri @ A.entries @ Ri, np.eye(5), atol=1e-9)

    def test_inv_sqrt_requires_spd(self):
        with self.assertRaises(NotSPD):
            inv_sqrt(SymMatrix.diag([1.0, 0.0]))


class SpsdProductTest(SimpleTestCase):
    def test_examples(self):
        assert_allclose(spectrum_of_spsd_product(SymMatrix.identity(2), np.diag([1.0, 2.0])), [1.0, 2.0])
        assert_allclose(spectrum_of_spsd_product(np.zeros((3, 3)), np.eye(3)), np.zeros(3))

    def test_matches_unsymmetric_eigenvalues(self):
        rng = np.random.default_rng(8)
        B = rng.standard_normal((6, 4))
        X = SymMatrix(B @ B.T)
        N = random_spd(6, 9)
        ours = spectrum_of_spsd_product(X, N)
        oracle = np.sort(np.linalg.eigvals(N @ X.entries).real)
        assert_allclose(ours, oracle, atol=1e-8 * np.max(np.abs(oracle)))
        self.assertTrue(np.all(ours >= -1e-12 * np.max(ours)))

    def test_generalized_pencil(self):
        A = random_spd(4, 10)
        B = random_spd(4, 11)
        oracle = np.sort(np.linalg.eigvals(np.linalg.solve(B, A)).real)
        assert_allclose(generalized_sym_eig(A, B), oracle, rtol=1e-10)

    def test_lambda_min_positive(self):
        self.assertEqual(lambda_min_positive(np.array([0.0, 1e-17, 0.25, 1.0])), 0.25)
        self.assertIsNone(lambda_min_positive(np.zeros(3)))


class MatrixMarketTest(SimpleTestCase):
    def test_symmetric_round_trip(self):
        A = SymMatrix(tridiag(7))
        with tempfile.TemporaryDirectory() as tmp:
            path = write_matrix(Path(tmp) / 'A.mtx', A)
            self.assertEqual(read_header(path), '%%MatrixMarket matrix coordinate real symmetric')
            B = read_matrix(path, symmetric=True)
        assert_array_equal(B.entries, A.entries)

    def test_general_round_trip(self):
        rng = np.random.default_rng(12)
        S = rng.standard_normal((5, 3))
        with tempfile.TemporaryDirectory() as tmp:
            path = write_matrix(Path(tmp) / 'S.mtx', S)
            self.assertIn('general', read_header(path))
            assert_array_equal(read_matrix(path), S)

    def test_unwritable_path(self):
        with self.assertRaises(IoError) as ctx:
            write_matrix('/nonexistent-dir/sub/A.mtx', SymMatrix.identity(2))
        self.assertIn('/nonexistent-dir/sub/A.mtx', str(ctx.exception))

    def test_missing_directory_under_existing_root(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'missing' / 'A.mtx'
            with self.assertRaises(IoError):
                write_matrix(path, SymMatrix.identity(3))
            self.assertFalse(path.exists())
