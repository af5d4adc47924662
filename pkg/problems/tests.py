import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal

from kernel.exceptions import InvalidSize, UnsatisfiableFlag
from kernel.models import SpdStatus
from kernel.utils import cholesky, numeric_rank, sym_eig

from .utils import (
    a_orthogonal_splitting, poisson1d, poisson2d, random_spd, random_splitting,
    standard_splitting_1d, standard_splitting_2d, two_grid_splitting, validate_splitting,
)


class Poisson1dTest(SimpleTestCase):
    def test_eigenvalues_and_condition(self):
        problem = poisson1d(3)
        values = sym_eig(problem.A).values
        assert_allclose(values, [2 - np.sqrt(2), 2.0, 2 + np.sqrt(2)], atol=1e-13)
        assert_allclose(values[-1] / values[0], 3 + 2 * np.sqrt(2), rtol=1e-12)

    def test_spd_and_manufactured_solution(self):
        for m in (3, 7, 15, 31):
            problem = poisson1d(m, seed=m)
            self.assertEqual(problem.A.spd_checked, SpdStatus.VERIFIED)
            residual = problem.A.entries @ problem.u_star - problem.f
            self.assertLessEqual(np.linalg.norm(residual), 1e-10 * np.linalg.norm(problem.f))

    def test_too_small(self):
        with self.assertRaises(InvalidSize):
            poisson1d(2)


class Poisson2dTest(SimpleTestCase):
    def test_stencil(self):
        problem = poisson2d(3)
        self.assertEqual(problem.n, 9)
        assert_array_equal(np.diag(problem.A.entries), np.full(9, 4.0))
        self.assertTrue(np.all(problem.A.entries.sum(axis=1) >= 0))

    def test_tensor_eigenvalues(self):
        m = 4
        k = np.arange(1, m + 1)
        one_d = 2 - 2 * np.cos(k * np.pi / (m + 1))
        expected = np.sort(np.add.outer(one_d, one_d).ravel())
        assert_allclose(sym_eig(poisson2d(m).A).values, expected, atol=1e-12)
        self.assertAlmostEqual(sym_eig(poisson2d(3).A).lambda_min, 4 - 4 * np.cos(np.pi / 4), places=12)


class RandomSpdTest(SimpleTestCase):
    def test_unit_condition_is_identity(self):
        assert_allclose(random_spd(5, 1.0, seed=1).A.entries, np.eye(5), atol=1e-14)

    def test_deterministic(self):
        assert_array_equal(random_spd(6, 50.0, seed=9).A.entries, random_spd(6, 50.0, seed=9).A.entries)

    def test_condition_number(self):
        values = sym_eig(random_spd(8, 100.0, seed=3).A).values
        self.assertTrue(90.0 <= values[-1] / values[0] <= 100.0 * (1 + 1e-10))


class StandardSplittingTest(SimpleTestCase):
    def test_smallest_case(self):
        split = standard_splitting_1d(3)
        assert_array_equal(split.P, [[0.5], [1.0], [0.5]])
        assert_array_equal(split.S, [[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])

    def test_rank_conditions(self):
        split = standard_splitting_1d(7)
        self.assertEqual(numeric_rank(np.hstack([split.S, split.P])), 7)
        self.assertEqual(split.n_s + split.n_c, 7)
        self.assertEqual(validate_splitting(split), [])

    def test_linear_interpolation_is_a_orthogonal_to_injection(self):
        # A P vanishes on the fine-only nodes for the 1D Laplacian, so S^T A P = 0
        problem = poisson1d(7)
        split = standard_splitting_1d(7)
        SAP = split.S.T @ problem.A.entries @ split.P
        assert_allclose(SAP, 0.0, atol=1e-15)
        self.assertEqual(numeric_rank(SAP), 0)

    def test_unique_decomposition(self):
        split = standard_splitting_1d(7)
        basis = np.hstack([split.S, split.P])
        rng = np.random.default_rng(0)
        for _ in range(20):
            v = rng.standard_normal(7)
            w = np.linalg.solve(basis, v)
            assert_allclose(split.S @ w[:split.n_s] + split.P @ w[split.n_s:], v, atol=1e-12)

    def test_even_size(self):
        with self.assertRaises(InvalidSize):
            standard_splitting_1d(8)

    def test_two_dimensional(self):
        split = standard_splitting_2d(5)
        self.assertEqual((split.n, split.n_c, split.n_s), (25, 4, 21))
        self.assertEqual(validate_splitting(split), [])
        SAP = split.S.T @ poisson2d(5).A.entries @ split.P
        self.assertEqual(numeric_rank(SAP), 4)


class RandomSplittingTest(SimpleTestCase):
    def test_invariants(self):
        split = random_splitting(10, 6, 6, seed=1)
        self.assertEqual(validate_splitting(split), [])
        self.assertEqual((split.n_s, split.n_c), (6, 6))

    def test_forced_deficiency(self):
        problem = random_spd(10, 20.0, seed=2)
        split = random_splitting(10, 6, 6, seed=3, force_rank_deficient_SAP=True, A=problem.A)
        SAP = split.S.T @ problem.A.entries @ split.P
        self.assertEqual(numeric_rank(SAP), 5)
        self.assertEqual(validate_splitting(split), [])

    def test_precondition(self):
        with self.assertRaises(InvalidSize):
            random_splitting(10, 4, 4, seed=1)

    def test_flag_needs_proper_subspace(self):
        with self.assertRaises(UnsatisfiableFlag):
            random_splitting(6, 6, 3, seed=1, force_rank_deficient_SAP=True, A=np.eye(6))


class OtherSplittingsTest(SimpleTestCase):
    def test_a_orthogonal(self):
        problem = random_spd(8, 10.0, seed=4)
        P = np.random.default_rng(5).standard_normal((8, 3))
        split = a_orthogonal_splitting(problem, P)
        self.assertEqual(split.n_s, 5)
        assert_allclose(split.S.T @ problem.A.entries @ split.P, 0.0, atol=1e-10)

    def test_two_grid(self):
        split = two_grid_splitting(standard_splitting_1d(7).P)
        self.assertTrue(split.is_two_grid)
        self.assertEqual((split.n_s, split.n_c), (7, 3))

    def test_cholesky_of_generated_matrices(self):
        for problem in (poisson1d(9), poisson2d(4), random_spd(7, 30.0, seed=11)):
            L = cholesky(problem.A)
            assert_allclose(L @ L.T, problem.A.entries, atol=1e-10 * problem.A.max_abs)
