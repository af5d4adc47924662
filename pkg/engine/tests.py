import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose

from coarse.solvers import CgSolver, ExactSolver, StationarySolver
from coarse.streams import RandomStream
from hierarchy.hierarchy_service import HierarchyService
from kernel.exceptions import InvalidSize
from kernel.models import SymMatrix
from kernel.utils import sym_eig
from problems.utils import (
    a_orthogonal_splitting, poisson1d, poisson2d, random_spd, random_splitting,
    standard_splitting_1d, standard_splitting_2d,
)

from .models import RunConfig
from .operators import (
    assemble_B_TL, assemble_B_TL_hierarchical, assemble_E_TG, assemble_E_TL, energy_operator_norm,
    no_postsmoothing_factor, preconditioner_residuals,
)
from .two_level_service import TwoLevelService


def build(problem, split, kind='gauss_seidel', omega=None, matrix=None):
    A_s = SymMatrix(split.S.T @ problem.A.entries @ split.S)
    smoother = HierarchyService.make_smoother(kind, A_s, omega=omega, matrix=matrix)
    return HierarchyService.assemble(problem, split, smoother)


def random_hierarchy(seed, n=9, n_s=6, n_c=5, kind='gauss_seidel'):
    return build(random_spd(n, 30.0, seed=seed), random_splitting(n, n_s, n_c, seed=seed + 50), kind)


def start_vector(h, seed):
    return np.random.default_rng(seed).standard_normal(h.n)


def energy(h, v):
    return float(np.sqrt(v @ h.A.entries @ v))


class RunConfigTest(SimpleTestCase):
    def test_single_solver_repeats(self):
        h = random_hierarchy(0)
        chain = RunConfig(nu=3, chain=({'kind': 'cg', 'ell': 2},)).build_chain(h)
        self.assertEqual([s.label for s in chain], ['cg(2)'] * 3)

    def test_length_mismatch(self):
        with self.assertRaises(InvalidSize):
            RunConfig(nu=3, chain=({'kind': 'cg', 'ell': 2}, {'kind': 'exact'}))

    def test_counts(self):
        with self.assertRaises(InvalidSize):
            RunConfig(nu=0)
        with self.assertRaises(InvalidSize):
            RunConfig(outer_sweeps=0)


class ExactTwoLevelTest(SimpleTestCase):
    def test_fixed_point(self):
        h = random_hierarchy(1)
        u, _ = TwoLevelService.exact_two_level(h, h.problem.f, h.problem.u_star)
        assert_allclose(u, h.problem.u_star, atol=1e-10 * np.linalg.norm(h.problem.u_star))

    def test_error_propagation(self):
        for seed in range(5):
            h = random_hierarchy(seed)
            u0 = start_vector(h, seed)
            u, _ = TwoLevelService.exact_two_level(h, h.problem.f, u0)
            predicted = assemble_E_TL(h) @ (h.problem.u_star - u0)
            err = h.problem.u_star - u
            assert_allclose(err, predicted, atol=1e-10 * np.linalg.norm(h.problem.u_star - u0))

    def test_poisson_contraction_below_norm(self):
        h = build(poisson1d(7), standard_splitting_1d(7), 'weighted_jacobi', omega=0.7)
        _, trace = TwoLevelService.exact_two_level(h, h.problem.f, start_vector(h, 3))
        self.assertLessEqual(trace.contraction, energy_operator_norm(h, assemble_E_TL(h)) + 1e-10)

    def test_two_grid_reduction(self):
        problem = poisson1d(9)
        P = standard_splitting_1d(9).P
        M = np.tril(problem.A.entries)
        h = TwoLevelService.two_grid_hierarchy(problem, P, M)
        u0 = start_vector(h, 4)
        u, _ = TwoLevelService.exact_two_level(h, problem.f, u0)
        predicted = assemble_E_TG(problem.A, P, M) @ (problem.u_star - u0)
        assert_allclose(problem.u_star - u, predicted, atol=1e-10 * np.linalg.norm(problem.u_star - u0))
        assert_allclose(assemble_E_TL(h), assemble_E_TG(problem.A, P, M), atol=1e-12)


class InexactTwoLevelTest(SimpleTestCase):
    def test_exact_chain_reduces_to_exact_method(self):
        for seed in range(50):
            h = random_hierarchy(seed)
            u0 = start_vector(h, seed)
            u_exact, exact = TwoLevelService.exact_two_level(h, h.problem.f, u0)
            cfg = RunConfig(nu=2, chain=({'kind': 'exact'},))
            u_inexact, trace = TwoLevelService.inexact_two_level(h, h.problem.f, u0, cfg)
            assert_allclose(u_inexact, u_exact, rtol=1e-12, atol=1e-12 * np.linalg.norm(u_exact))
            self.assertAlmostEqual(trace.err_final, exact.err_final, delta=1e-10 * exact.err_initial)

    def test_full_cg_matches_exact(self):
        for seed in range(50):
            h = random_hierarchy(seed)
            u0 = start_vector(h, seed)
            u_exact, _ = TwoLevelService.exact_two_level(h, h.problem.f, u0)
            cfg = RunConfig(nu=1, chain=({'kind': 'cg', 'ell': h.n_c},))
            u_cg, _ = TwoLevelService.inexact_two_level(h, h.problem.f, u0, cfg)
            assert_allclose(u_cg, u_exact, atol=1e-9 * np.linalg.norm(u_exact))

    def test_full_cg_matches_exact_on_poisson(self):
        h = build(poisson1d(15), standard_splitting_1d(15), 'gauss_seidel')
        u0 = start_vector(h, 5)
        u_exact, _ = TwoLevelService.exact_two_level(h, h.problem.f, u0)
        cfg = RunConfig(nu=1, chain=({'kind': 'cg', 'ell': h.n_c},))
        u_cg, _ = TwoLevelService.inexact_two_level(h, h.problem.f, u0, cfg)
        assert_allclose(u_cg, u_exact, atol=1e-9 * np.linalg.norm(u_exact))

    def test_outer_sweeps_match_exact_chain(self):
        h = random_hierarchy(3)
        u0 = start_vector(h, 3)
        u_exact, exact = TwoLevelService.exact_two_level(h, h.problem.f, u0, outer_sweeps=3)
        u_inexact, trace = TwoLevelService.inexact_two_level(h, h.problem.f, u0, RunConfig(outer_sweeps=3))
        self.assertEqual(len(exact.sweeps), 3)
        assert_allclose(u_inexact, u_exact, rtol=1e-12, atol=1e-12 * np.linalg.norm(u_exact))
        assert_allclose([s.err_final for s in trace.sweeps], [s.err_final for s in exact.sweeps], rtol=1e-9)
        self.assertLessEqual(max(s.inner.overall_accuracy for s in exact.sweeps), 1e-10)

    def test_without_postsmoothing(self):
        h = random_hierarchy(6)
        u0 = start_vector(h, 6)
        cfg = RunConfig(postsmoothing=False)
        u, trace = TwoLevelService.inexact_two_level(h, h.problem.f, u0, cfg)
        sweep = trace.sweeps[0]
        self.assertAlmostEqual(sweep.err_final, sweep.err2)
        self.assertLessEqual(sweep.contraction, no_postsmoothing_factor(h) + 1e-10)

    def test_sweeps_chain_together(self):
        h = random_hierarchy(7)
        cfg = RunConfig(outer_sweeps=4, chain=({'kind': 'cg', 'ell': 2},))
        _, trace = TwoLevelService.inexact_two_level(h, h.problem.f, start_vector(h, 7), cfg)
        self.assertEqual(len(trace.sweeps), 4)
        for a, b in zip(trace.sweeps, trace.sweeps[1:]):
            self.assertEqual(a.err_final, b.err0)
        self.assertTrue(all(s.err0 >= 0.0 for s in trace.sweeps))

    def test_randomized_runs_are_reproducible(self):
        h = random_hierarchy(8)
        cfg = RunConfig(nu=2, chain=({'kind': 'rcd', 'ell': 4},), outer_sweeps=2)
        u0 = start_vector(h, 8)
        a, _ = TwoLevelService.inexact_two_level(h, h.problem.f, u0, cfg, stream=RandomStream(5))
        b, _ = TwoLevelService.inexact_two_level(h, h.problem.f, u0, cfg, stream=RandomStream(5))
        np.testing.assert_array_equal(a, b)

    def test_solver_instances_in_chain(self):
        h = random_hierarchy(9)
        cfg = RunConfig(nu=2, chain=(CgSolver(1), StationarySolver(preconditioner='jacobi')))
        _, trace = TwoLevelService.inexact_two_level(h, h.problem.f, start_vector(h, 9), cfg)
        self.assertEqual(trace.sweeps[0].inner.labels, ['cg(1)', 'stationary(jacobi, 1)'])
        self.assertEqual(len(RunConfig(chain=(ExactSolver(),)).build_chain(h)), 1)


class InexactTwoGridTest(SimpleTestCase):
    def test_fixed_point(self):
        problem = poisson2d(3)
        P = standard_splitting_2d(3).P
        M = np.tril(problem.A.entries)
        cfg = RunConfig(chain=({'kind': 'rcd', 'ell': 3},))
        u, trace = TwoLevelService.inexact_two_grid(problem, P, M, problem.f, problem.u_star, cfg)
        assert_allclose(u, problem.u_star, atol=1e-10 * np.linalg.norm(problem.u_star))
        self.assertEqual(trace.err_initial, 0.0)

    def test_exact_chain_matches_E_TG(self):
        problem = poisson2d(5)
        P = standard_splitting_2d(5).P
        M = np.diag(np.diag(problem.A.entries)) / 0.8
        u0 = np.random.default_rng(1).standard_normal(problem.n)
        u, _ = TwoLevelService.inexact_two_grid(problem, P, M, problem.f, u0, RunConfig())
        predicted = assemble_E_TG(problem.A, P, M) @ (problem.u_star - u0)
        assert_allclose(problem.u_star - u, predicted, atol=1e-10 * np.linalg.norm(u0))


class IterationMatrixTest(SimpleTestCase):
    def test_a_orthogonal_splitting_gives_zero(self):
        problem = random_spd(8, 25.0, seed=2)
        P = np.random.default_rng(3).standard_normal((8, 3))
        split = a_orthogonal_splitting(problem, P)
        A_s = split.S.T @ problem.A.entries @ split.S
        h = build(problem, split, 'custom', matrix=A_s)
        assert_allclose(assemble_E_TL(h), np.zeros((8, 8)), atol=1e-10)

    def test_energy_symmetrized_is_spsd(self):
        for seed in range(8):
            h = random_hierarchy(seed)
            self.assertGreaterEqual(preconditioner_residuals(h)['etl_sym_lambda_min'], -1e-12)

    def test_spectral_radius_equals_energy_norm(self):
        for seed in range(6):
            h = random_hierarchy(seed)
            E = assemble_E_TL(h)
            rho = np.max(np.abs(np.linalg.eigvals(E)))
            self.assertAlmostEqual(rho, energy_operator_norm(h, E), delta=1e-9)


class PreconditionerTest(SimpleTestCase):
    def test_identities(self):
        for seed in range(8):
            h = random_hierarchy(seed)
            res = preconditioner_residuals(h)
            self.assertLessEqual(res['etl2_residual'], 1e-9)
            self.assertLessEqual(res['b_tl_lambda_max_gap'], 1e-9)
            self.assertGreaterEqual(res['b_minus_a_lambda_min'], -1e-10)
            self.assertLessEqual(res['hierarchical_b_gap'], 1e-9)

    def test_two_assembly_paths(self):
        h = build(poisson2d(5), standard_splitting_2d(5), 'weighted_jacobi', omega=0.8)
        assert_allclose(assemble_B_TL(h).entries, assemble_B_TL_hierarchical(h).entries, atol=1e-9)

    def test_eigenvalues_of_preconditioned_matrix(self):
        h = random_hierarchy(12)
        values = sym_eig(h.A_sqrt @ assemble_B_TL(h).entries @ h.A_sqrt).values
        self.assertAlmostEqual(values[-1], 1.0, delta=1e-9)
        self.assertGreater(values[0], 0.0)
