import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal

from hierarchy.hierarchy_service import HierarchyService
from kernel.exceptions import BreakdownNumerical, InvalidSize, UnknownSolver
from kernel.models import SymMatrix
from problems.utils import poisson1d, random_spd, random_splitting, standard_splitting_1d

from .inner_service import a_inv_norm, a_norm, run_inner
from .models import AccuracyCert, CertMode
from .solvers import (
    CgSolver, ExactSolver, RbcdSolver, RcdSolver, StationarySolver, consecutive_blocks, solver_from_spec,
)
from .streams import RandomStream, derive_rng


def build(problem, split, kind='gauss_seidel'):
    A_s = SymMatrix(split.S.T @ problem.A.entries @ split.S)
    return HierarchyService.assemble(problem, split, HierarchyService.make_smoother(kind, A_s))


def poisson_hierarchy(m=15):
    return build(poisson1d(m), standard_splitting_1d(m), 'jacobi')


def random_hierarchy(seed, n=10, n_s=6, n_c=6):
    return build(random_spd(n, 40.0, seed=seed), random_splitting(n, n_s, n_c, seed=seed + 1))


def measured_accuracy(solver, A_c, r, rng=None):
    A = np.asarray(A_c)
    x = np.linalg.solve(A, r)
    return a_norm(x - solver.apply(A_c, r, rng), A) / np.sqrt(r @ x)


class StreamTest(SimpleTestCase):
    def test_reproducible(self):
        a = derive_rng(42, 3, 1).standard_normal(5)
        b = RandomStream(42).child(3).child(1).rng().standard_normal(5)
        assert_array_equal(a, b)

    def test_paths_differ(self):
        self.assertFalse(np.array_equal(derive_rng(42, 0).random(3), derive_rng(42, 1).random(3)))

    def test_spawn(self):
        streams = RandomStream(7).spawn(3)
        self.assertEqual([s.path for s in streams], [(0,), (1,), (2,)])


class ExactSolverTest(SimpleTestCase):
    def test_zero(self):
        h = poisson_hierarchy(7)
        assert_array_equal(ExactSolver(h).apply(h.A_c, np.zeros(h.n_c)), np.zeros(h.n_c))

    def test_unit_coarse_matrix(self):
        h = poisson_hierarchy(3)
        assert_allclose(ExactSolver(h).apply(h.A_c, np.array([5.0])), [5.0])

    def test_exact(self):
        h = poisson_hierarchy(15)
        rng = np.random.default_rng(0)
        for _ in range(10):
            r = rng.standard_normal(h.n_c)
            self.assertLessEqual(measured_accuracy(ExactSolver(h), h.A_c, r), 1e-12)
        self.assertEqual(ExactSolver(h).epsilon_apriori(h.A_c).epsilon, 0.0)


class CgSolverTest(SimpleTestCase):
    def test_finite_termination(self):
        h = poisson_hierarchy(15)
        r = np.random.default_rng(1).standard_normal(h.n_c)
        self.assertLessEqual(measured_accuracy(CgSolver(h.n_c), h.A_c, r), 1e-10)

    def test_identity(self):
        r = np.array([1.0, -2.0, 3.0])
        assert_array_equal(CgSolver(1).apply(np.eye(3), r), r)
        self.assertEqual(CgSolver(1).epsilon_apriori(np.eye(3)).epsilon, 0.0)

    def test_certificate_values(self):
        A_c = np.diag([1.0, 9.0])
        cert = CgSolver(2).epsilon_apriori(A_c)
        self.assertAlmostEqual(cert.epsilon, 0.5, places=12)
        self.assertTrue(cert.applicable)
        one = CgSolver(1).epsilon_apriori(A_c)
        self.assertAlmostEqual(one.epsilon, 1.0, places=12)
        self.assertFalse(one.applicable)
        self.assertAlmostEqual(CgSolver.threshold_steps(9.0), 1.0, places=12)

    def test_poisson_certificate_holds(self):
        h = poisson_hierarchy(15)
        self.assertEqual(h.n_c, 7)
        k = np.arange(1, 8)
        analytic = 1.0 - np.cos(k * np.pi / 8)
        kappa = CgSolver(1).condition_number(h.A_c)
        self.assertAlmostEqual(kappa, analytic.max() / analytic.min(), delta=1e-10 * kappa)

        rng = np.random.default_rng(2)
        for ell in range(1, h.n_c + 1):
            solver = CgSolver(ell)
            eps = solver.epsilon_apriori(h.A_c).epsilon
            for _ in range(50):
                r = rng.standard_normal(h.n_c)
                self.assertLessEqual(measured_accuracy(solver, h.A_c, r), eps + 1e-10)

    def test_diagonal_scaling(self):
        A_c = np.diag([1.0, 100.0, 10.0])
        solver = CgSolver(1, diagonal=True)
        self.assertAlmostEqual(solver.condition_number(A_c), 1.0)
        r = np.array([1.0, 1.0, 1.0])
        assert_allclose(solver.apply(A_c, r), [1.0, 0.01, 0.1])

    def test_breakdown(self):
        with self.assertRaises(BreakdownNumerical):
            CgSolver(2).apply(np.diag([1.0, -1.0]), np.array([0.0, 1.0]))


class RcdSolverTest(SimpleTestCase):
    def test_single_step(self):
        solver = RcdSolver(1)
        r = np.array([3.0, 4.0])
        rng = np.random.default_rng(5)
        i = solver.draw(np.eye(2), np.random.default_rng(5))[0]
        e = solver.apply(np.eye(2), r, rng)
        expected = np.zeros(2)
        expected[i] = r[i]
        assert_array_equal(e, expected)

    def test_certificate(self):
        self.assertAlmostEqual(RcdSolver(3).epsilon_apriori(np.eye(2)).epsilon, 0.5 ** 1.5)
        cert = RcdSolver(4).epsilon_apriori(np.diag([1.0, 3.0]))
        self.assertAlmostEqual(cert.epsilon, 0.5625)
        self.assertEqual(cert.mode, CertMode.IN_EXPECTATION)

    def test_probabilities(self):
        assert_allclose(RcdSolver.probabilities(np.diag([1.0, 3.0])), [0.25, 0.75])


class RbcdSolverTest(SimpleTestCase):
    def test_single_block_is_exact(self):
        A_c = random_spd(4, 20.0, seed=3).A
        solver = RbcdSolver(1, blocks=[[0, 1, 2, 3]])
        r = np.random.default_rng(0).standard_normal(4)
        self.assertLessEqual(measured_accuracy(solver, A_c, r, np.random.default_rng(1)), 1e-12)
        self.assertAlmostEqual(solver.epsilon_apriori(A_c).epsilon, 0.0, places=6)
        assert_allclose(solver.expectation_matrix(A_c), np.eye(4), atol=1e-10)

    def test_singletons_match_rcd_on_constant_diagonal(self):
        A_c = 2.0 * np.eye(4) - 0.5 * (np.eye(4, k=1) + np.eye(4, k=-1))
        rbcd = RbcdSolver(5, block_size=1).epsilon_apriori(A_c).epsilon
        rcd = RcdSolver(5).epsilon_apriori(A_c).epsilon
        self.assertAlmostEqual(rbcd, rcd, places=10)

    def test_bad_partition(self):
        with self.assertRaises(InvalidSize):
            RbcdSolver(1, blocks=[[0, 1], [1, 2]]).apply(np.eye(3), np.ones(3), np.random.default_rng(0))

    def test_consecutive_blocks(self):
        self.assertEqual([b.tolist() for b in consecutive_blocks(5, 2)], [[0, 1], [2, 3], [4]])


class StationarySolverTest(SimpleTestCase):
    def test_exact_and_scaled(self):
        A_c = random_spd(5, 10.0, seed=6).A
        self.assertAlmostEqual(StationarySolver(B_c=A_c.entries).epsilon_apriori(A_c).epsilon, 0.0, places=10)
        self.assertAlmostEqual(StationarySolver(B_c=2.0 * A_c.entries).epsilon_apriori(A_c).epsilon, 0.5, places=10)
        self.assertAlmostEqual(StationarySolver(preconditioner='scaled', scale=2.0).epsilon_apriori(A_c).epsilon, 0.5, places=10)

    def test_jacobi_on_poisson(self):
        h = poisson_hierarchy(15)
        A_c = h.A_c.entries
        oracle = np.linalg.eigvals(np.linalg.solve(np.diag(np.diag(A_c)), A_c)).real
        cert = StationarySolver(preconditioner='jacobi').epsilon_apriori(h.A_c)
        self.assertAlmostEqual(cert.epsilon, np.max(np.abs(1.0 - oracle)), places=10)
        self.assertTrue(cert.applicable)

    def test_certificate_holds(self):
        h = random_hierarchy(4)
        solver = StationarySolver(preconditioner='jacobi', scale=0.5)
        eps = solver.epsilon_apriori(h.A_c).epsilon
        rng = np.random.default_rng(9)
        for _ in range(200):
            r = rng.standard_normal(h.n_c)
            self.assertLessEqual(measured_accuracy(solver, h.A_c, r), eps + 1e-10)


class SolverFactoryTest(SimpleTestCase):
    def test_kinds(self):
        self.assertIsInstance(solver_from_spec({'kind': 'cg', 'ell': 3}), CgSolver)
        self.assertIsInstance(solver_from_spec({'kind': 'rbcd', 'ell': 3, 'block_size': 2}), RbcdSolver)
        self.assertIsInstance(solver_from_spec({'kind': 'stationary', 'preconditioner': 'scaled', 'scale': 2.0}), StationarySolver)

    def test_unknown(self):
        with self.assertRaises(UnknownSolver):
            solver_from_spec({'kind': 'multigrid'})


class RunInnerTest(SimpleTestCase):
    def test_exact_single_step(self):
        h = random_hierarchy(5)
        r_c = np.random.default_rng(0).standard_normal(h.n_c)
        e, trace = run_inner(h, r_c, [ExactSolver(h)])
        assert_allclose(e, h.solve_A_c(r_c), rtol=1e-12)
        self.assertLessEqual(np.linalg.norm(trace.residuals[-1]), 1e-10 * np.linalg.norm(r_c))

    def test_product_of_step_accuracies(self):
        h = random_hierarchy(6)
        r_c = np.random.default_rng(1).standard_normal(h.n_c)
        chain = [StationarySolver(preconditioner='scaled', scale=2.0), StationarySolver(preconditioner='scaled', scale=1.25)]
        _, trace = run_inner(h, r_c, chain)
        assert_allclose(trace.measured_eps, [0.5, 0.2], rtol=1e-9)
        self.assertAlmostEqual(trace.product_eps, 0.1, places=9)
        self.assertLessEqual(trace.overall_accuracy, 0.1 + 1e-10)
        self.assertAlmostEqual(trace.chain_cert.epsilon, 0.1, places=9)

    def test_hybrid_chain(self):
        h = random_hierarchy(7)
        rng = np.random.default_rng(2)
        for t in range(20):
            r_c = rng.standard_normal(h.n_c)
            _, trace = run_inner(h, r_c, [CgSolver(2), RcdSolver(6)], RandomStream(11).child(t))
            self.assertLessEqual(trace.overall_accuracy, trace.product_eps + 1e-10)
            self.assertEqual(trace.chain_cert.mode, CertMode.IN_EXPECTATION)

    def test_trace_consistency_and_sandwich(self):
        h = random_hierarchy(8)
        rng = np.random.default_rng(3)
        for t in range(10):
            r_c = rng.standard_normal(h.n_c)
            e, trace = run_inner(h, r_c, [CgSolver(1), StationarySolver(preconditioner='jacobi'), CgSolver(2)])
            for k in range(trace.nu + 1):
                assert_allclose(trace.residuals[k], r_c - h.A_c.entries @ trace.iterates[k], atol=1e-12 * np.linalg.norm(r_c))
                assert_allclose(trace.error_norms[k], a_inv_norm(trace.residuals[k], h), rtol=1e-10, atol=1e-14)
            eps = trace.overall_accuracy
            if eps < 1.0:
                norm2 = trace.rc_norm ** 2
                self.assertLessEqual((1 - eps) * norm2, trace.rTe * (1 + 1e-12))
                self.assertLessEqual(trace.rTe, (1 + eps) * norm2 * (1 + 1e-12))
                self.assertLessEqual((1 - eps) * trace.rc_norm, trace.e_norm * (1 + 1e-12))
                self.assertLessEqual(trace.e_norm, (1 + eps) * trace.rc_norm * (1 + 1e-12))

    def test_short_circuit_after_exact_step(self):
        h = poisson_hierarchy(3)
        _, trace = run_inner(h, np.array([2.5]), [ExactSolver(h), CgSolver(2)])
        self.assertEqual(trace.measured_eps[1], 0.0)
        self.assertTrue(trace.short_circuited)
        self.assertEqual(trace.steps_taken, 1)

    def test_zero_residual(self):
        h = random_hierarchy(10)
        e, trace = run_inner(h, np.zeros(h.n_c), [CgSolver(2)])
        assert_array_equal(e, np.zeros(h.n_c))
        self.assertEqual(trace.overall_accuracy, 0.0)

    def test_deterministic_given_stream(self):
        h = random_hierarchy(11)
        r_c = np.ones(h.n_c)
        e1, _ = run_inner(h, r_c, [RcdSolver(5), RbcdSolver(3, block_size=2)], RandomStream(99))
        e2, _ = run_inner(h, r_c, [RcdSolver(5), RbcdSolver(3, block_size=2)], RandomStream(99))
        assert_array_equal(e1, e2)


class AccuracyCertTest(SimpleTestCase):
    def test_chain(self):
        cert = AccuracyCert.chain([AccuracyCert.of(0.5), AccuracyCert.of(0.4, CertMode.IN_EXPECTATION)])
        self.assertAlmostEqual(cert.epsilon, 0.2)
        self.assertEqual(cert.mode, CertMode.IN_EXPECTATION)
        self.assertFalse(AccuracyCert.of(1.0).applicable)
