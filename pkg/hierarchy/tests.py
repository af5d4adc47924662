from unittest import mock

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose

from kernel.exceptions import NotSPD, RankCondition, SmootherInvalid
from kernel.models import SymMatrix, as_gen_matrix
from kernel.utils import cholesky, energy_norm, null_space_basis
from problems.models import SplittingSpec
from problems.utils import poisson1d, random_spd, random_splitting, standard_splitting_1d

from .hierarchy_service import HierarchyService, contraction_of
from .models import SmootherKind


def tridiag(n):
    return 2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)


def build(problem, split, kind='gauss_seidel', omega=None, matrix=None):
    A_s = SymMatrix(split.S.T @ problem.A.entries @ split.S)
    smoother = HierarchyService.make_smoother(kind, A_s, omega=omega, matrix=matrix)
    return HierarchyService.assemble(problem, split, smoother)


def random_hierarchy(seed, kind='gauss_seidel'):
    problem = random_spd(8, 50.0, seed=seed)
    split = random_splitting(8, 5, 4, seed=seed + 100)
    return build(problem, split, kind)


class MakeSmootherTest(SimpleTestCase):
    def test_jacobi_on_identity(self):
        smoother = HierarchyService.make_smoother('jacobi', SymMatrix.identity(3))
        assert_allclose(smoother.M_s, np.eye(3))
        self.assertEqual(smoother.kind, SmootherKind.JACOBI)

    def test_jacobi_on_laplacian(self):
        A_s = SymMatrix(tridiag(3))
        smoother = HierarchyService.make_smoother('jacobi', A_s)
        assert_allclose(smoother.M_s, 2.0 * np.eye(3))
        D = SymMatrix(2 * smoother.M_s - A_s.entries)
        assert_allclose(D.entries, 2.0 * np.eye(3) + np.eye(3, k=1) + np.eye(3, k=-1))
        cholesky(D)

    def test_gauss_seidel_always_valid(self):
        for seed in range(5):
            A_s = random_spd(6, 1e3, seed=seed).A
            smoother = HierarchyService.make_smoother('gauss_seidel', A_s)
            assert_allclose(smoother.M_s, np.tril(A_s.entries))

    def test_weighted_jacobi(self):
        smoother = HierarchyService.make_smoother('weighted_jacobi', SymMatrix(tridiag(4)), omega=0.5)
        assert_allclose(smoother.M_s, 4.0 * np.eye(4))
        self.assertEqual(smoother.label, 'weighted_jacobi(0.5)')

    def test_invalid_reports_lambda_min(self):
        A_s = SymMatrix(tridiag(4))
        with self.assertRaises(SmootherInvalid) as ctx:
            HierarchyService.make_smoother('custom', A_s, matrix=A_s.entries / 4.0)
        self.assertLess(ctx.exception.lambda_min, 0.0)
        self.assertGreaterEqual(contraction_of(A_s.entries / 4.0, A_s), 1.0)

    def test_jacobi_can_be_invalid(self):
        # strong off-diagonal coupling makes 2 diag(A) - A indefinite
        A_s = SymMatrix([[1.0, 0.9, 0.9], [0.9, 1.0, 0.9], [0.9, 0.9, 1.0]])
        with self.assertRaises(SmootherInvalid):
            HierarchyService.make_smoother('jacobi', A_s)
        self.assertGreaterEqual(contraction_of(np.diag(np.diag(A_s.entries)), A_s), 1.0)


class AssembleTest(SimpleTestCase):
    def test_smallest_poisson(self):
        h = build(poisson1d(3), standard_splitting_1d(3), 'jacobi')
        assert_allclose(h.A_c.entries, [[1.0]])
        assert_allclose(h.A_s.entries, 2.0 * np.eye(2))

    def test_exact_smoother_symmetrizations(self):
        problem = random_spd(8, 20.0, seed=1)
        split = random_splitting(8, 5, 4, seed=2)
        A_s = SymMatrix(split.S.T @ problem.A.entries @ split.S)
        h = build(problem, split, 'custom', matrix=A_s.entries)
        assert_allclose(h.Mbar_s.entries, A_s.entries, rtol=1e-9, atol=1e-9 * A_s.max_abs)
        assert_allclose(h.Mtilde_s.entries, A_s.entries, rtol=1e-9, atol=1e-9 * A_s.max_abs)

    def test_symmetric_smoother(self):
        h = build(poisson1d(7), standard_splitting_1d(7), 'weighted_jacobi', omega=0.7)
        assert_allclose(h.Mbar_s.entries, h.Mtilde_s.entries, atol=1e-14)

    def test_invariants(self):
        for seed in range(6):
            h = random_hierarchy(seed)
            res = h.invariant_residuals
            self.assertLessEqual(res['pi_idempotency'], 1e-9)
            self.assertLessEqual(res['a_pi_symmetry'], 1e-9)
            self.assertLessEqual(res['lemma_opening_identity'], 1e-9)
            self.assertGreaterEqual(res['inv_gap_lambda_min'], -1e-10)
            cholesky(h.Mbar_s)
            cholesky(h.Mtilde_s)

    def test_rank_condition(self):
        problem = random_spd(4, 5.0, seed=3)
        S = np.eye(4)[:, :2]
        P = np.array([[1.0], [1.0], [0.0], [0.0]])
        split = SplittingSpec(S=as_gen_matrix(S), P=as_gen_matrix(P), provenance='degenerate')
        smoother = HierarchyService.make_smoother('gauss_seidel', SymMatrix(S.T @ problem.A.entries @ S))
        with self.assertRaises(RankCondition):
            HierarchyService.assemble(problem, split, smoother)

    def test_symmetrized_smoothers_are_certified(self):
        problem = random_spd(8, 50.0, seed=4)
        split = random_splitting(8, 5, 4, seed=104)
        reference = build(problem, split)

        def failing_on(target):
            def factor(M):
                if np.array_equal(np.asarray(M), target.entries):
                    raise NotSPD('not positive definite', pivot=0)
                return cholesky(M)
            return factor

        for name in ('Mbar_s', 'Mtilde_s'):
            with mock.patch('hierarchy.hierarchy_service.cholesky', side_effect=failing_on(getattr(reference, name))):
                with self.assertRaisesMessage(SmootherInvalid, name):
                    HierarchyService.assemble(problem, split, reference.smoother)


class SmootherContractionTest(SimpleTestCase):
    def test_exact_and_scaled(self):
        A_s = random_spd(5, 10.0, seed=4).A
        self.assertAlmostEqual(contraction_of(A_s.entries, A_s), 0.0, places=7)
        self.assertAlmostEqual(contraction_of(2.0 * A_s.entries, A_s), 0.5, places=10)

    def test_poisson_weighted_jacobi(self):
        # A_s = 2I here, so weighted Jacobi contracts by |1 - omega|
        h = build(poisson1d(7), standard_splitting_1d(7), 'weighted_jacobi', omega=0.7)
        self.assertAlmostEqual(HierarchyService.smoother_contraction(h), 0.3, places=10)

    def test_valid_smoothers_contract(self):
        for seed in range(5):
            value = HierarchyService.smoother_contraction(random_hierarchy(seed))
            self.assertTrue(0.0 < value < 1.0)


class CompatibleRelaxationTest(SimpleTestCase):
    def setUp(self):
        problem = random_spd(8, 30.0, seed=5)
        split = random_splitting(8, 5, 4, seed=6)
        A_s = SymMatrix(split.S.T @ problem.A.entries @ split.S)
        self.h = build(problem, split, 'custom', matrix=A_s.entries)
        self.problem = problem

    def test_fixed_point(self):
        u = HierarchyService.apply_compatible_relaxation(self.h, self.problem.u_star, self.problem.f)
        assert_allclose(u, self.problem.u_star, atol=1e-10)

    def test_range_of_S_is_annihilated(self):
        e = self.h.S @ np.random.default_rng(7).standard_normal(self.h.n_s)
        u = HierarchyService.apply_compatible_relaxation(self.h, self.problem.u_star - e, self.problem.f)
        new_error = self.problem.u_star - u
        self.assertLessEqual(energy_norm(new_error, self.problem.A), 1e-10 * energy_norm(e, self.problem.A))

    def test_a_orthogonal_complement_unchanged(self):
        basis = null_space_basis(self.h.S.T @ self.problem.A.entries)
        e = basis @ np.ones(basis.shape[1])
        u = HierarchyService.apply_compatible_relaxation(self.h, self.problem.u_star - e, self.problem.f)
        assert_allclose(self.problem.u_star - u, e, atol=1e-10)
