import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose

from coarse.models import CertMode
from coarse.solvers import RbcdSolver, RcdSolver
from coarse.streams import RandomStream
from engine.models import RunConfig
from engine.operators import assemble_E_TG, assemble_E_TL, energy_norm_of, energy_operator_norm, no_postsmoothing_factor
from engine.two_level_service import TwoLevelService
from hierarchy.hierarchy_service import HierarchyService
from kernel.exceptions import InvalidSize, UnknownSolver
from kernel.models import SymMatrix
from problems.utils import (
    a_orthogonal_splitting, poisson1d, poisson2d, random_prolongation, random_spd, random_splitting,
    standard_splitting_1d, standard_splitting_2d,
)

from .models import Check, LemmaBranch
from .monte_carlo import mean_and_se, rbcd_expectation_estimate, squared_error_estimate
from .theory_service import TheoryService, projection_minimization_gap, two_grid_operators


def build(problem, split, kind='gauss_seidel', omega=None, matrix=None):
    A_s = SymMatrix(split.S.T @ problem.A.entries @ split.S)
    smoother = HierarchyService.make_smoother(kind, A_s, omega=omega, matrix=matrix)
    return HierarchyService.assemble(problem, split, smoother)


def random_hierarchy(seed, n=9, n_s=6, n_c=5, kind='gauss_seidel'):
    return build(random_spd(n, 30.0, seed=seed), random_splitting(n, n_s, n_c, seed=seed + 70), kind)


def a_orthogonal_hierarchy(seed=0, n=8, n_c=3):
    problem = random_spd(n, 25.0, seed=seed)
    split = a_orthogonal_splitting(problem, random_prolongation(n, n_c, seed + 1))
    A_s = split.S.T @ problem.A.entries @ split.S
    return build(problem, split, 'custom', matrix=A_s)


def random_two_grid(seed, n=8, n_c=3):
    problem = random_spd(n, 20.0, seed=seed)
    P = random_prolongation(n, n_c, seed + 9)
    M = np.tril(problem.A.entries)
    return problem, P, M


def runs_on(h, cfg, trials, u0=None, seed=0):
    u0 = np.zeros(h.n) if u0 is None else u0
    stream = RandomStream(seed)
    return [
        TwoLevelService.inexact_two_level(h, h.problem.f, u0, cfg, stream=stream.child(t))[1]
        for t in range(trials)
    ]


class ConvergenceFactorTest(SimpleTestCase):
    def test_a_orthogonal_splitting_converges_in_one_step(self):
        h = a_orthogonal_hierarchy()
        self.assertAlmostEqual(TheoryService.convergence_factor_TL(h), 0.0, delta=1e-10)

    def test_below_one_and_matches_energy_norm(self):
        for seed in range(6):
            h = random_hierarchy(seed)
            factor = TheoryService.convergence_factor_TL(h)
            self.assertLess(factor, 1.0)
            self.assertAlmostEqual(factor, energy_operator_norm(h, assemble_E_TL(h)), delta=1e-9)

    def test_direct_sum_with_exact_smoother(self):
        problem = poisson1d(9)
        split = standard_splitting_1d(9)
        A_s = split.S.T @ problem.A.entries @ split.S
        factor = TheoryService.convergence_factor_TL(build(problem, split, 'custom', matrix=A_s))
        self.assertGreaterEqual(factor, -1e-12)
        self.assertLess(factor, 1.0)


class KTLTest(SimpleTestCase):
    def test_a_orthogonal_gives_one_on_both_paths(self):
        spectral, supinf = TheoryService.K_TL(a_orthogonal_hierarchy(), supinf=True)
        self.assertAlmostEqual(spectral, 1.0, delta=1e-9)
        self.assertAlmostEqual(supinf, 1.0, delta=1e-7)

    def test_supinf_agrees_with_spectral(self):
        for seed in range(30):
            n = 6 + seed % 7
            n_s, n_c = n - 2, n // 2
            h = build(random_spd(n, 40.0, seed=seed), random_splitting(n, n_s, n_c, seed=seed + 300))
            spectral, supinf = TheoryService.K_TL(h, supinf=True)
            self.assertLessEqual(abs(supinf - spectral) / spectral, 1e-7, msg=f'seed {seed}')

    def test_identity_with_convergence_factor(self):
        for seed in range(10):
            h = random_hierarchy(seed)
            spectral, _ = TheoryService.K_TL(h, supinf=False)
            self.assertGreaterEqual(spectral, 1.0)
            self.assertAlmostEqual(1.0 - 1.0 / spectral, energy_operator_norm(h, assemble_E_TL(h)), delta=1e-9)

    def test_supinf_skipped_for_large_problems(self):
        h = build(poisson1d(15), standard_splitting_1d(15))
        _, supinf = TheoryService.K_TL(h)
        self.assertIsNone(supinf)


class KTGTest(SimpleTestCase):
    def test_identity_with_iteration_matrix(self):
        for seed in range(10):
            problem, P, M = random_two_grid(seed)
            A = problem.A.entries
            K = TheoryService.K_TG(A, P, M)
            self.assertAlmostEqual(1.0 - 1.0 / K, energy_norm_of(A, assemble_E_TG(A, P, M)), delta=1e-9)

    def test_projection_is_best_approximation(self):
        problem, P, M = random_two_grid(3)
        operators = two_grid_operators(problem.A.entries, P, M)
        self.assertLessEqual(projection_minimization_gap(operators[0], operators[3], P), 1e-9)

    def test_matches_two_level_on_full_space(self):
        problem = poisson2d(5)
        P = standard_splitting_2d(5).P
        M = np.diag(np.diag(problem.A.entries)) / 0.8
        h = TwoLevelService.two_grid_hierarchy(problem, P, M)
        spectral, _ = TheoryService.K_TL(h, supinf=False)
        self.assertAlmostEqual(TheoryService.K_TG(problem.A.entries, P, M) / spectral, 1.0, delta=1e-8)


class LemmaXZcTest(SimpleTestCase):
    def test_full_rank_branch(self):
        h = build(poisson2d(5), standard_splitting_2d(5))
        self.assertEqual(h.rank_SAP, h.n_c)
        lemma = TheoryService.mu_and_lemma_XZc(h)
        self.assertEqual(lemma.branch, LemmaBranch.FULL_RANK)
        self.assertGreater(lemma.mu, 0.0)
        self.assertLessEqual(lemma.mu, 1.0 + 1e-9)
        self.assertAlmostEqual(lemma.lambda_max, 1.0 - lemma.mu, delta=1e-8)

    def test_full_rank_on_random_instances(self):
        for seed in range(10):
            lemma = TheoryService.mu_and_lemma_XZc(random_hierarchy(seed))
            self.assertLessEqual(lemma.gap, 1e-8)

    def test_forced_deficient_branch(self):
        for seed in range(5):
            problem = random_spd(10, 30.0, seed=seed)
            split = random_splitting(10, 6, 6, seed=seed + 11, force_rank_deficient_SAP=True, A=problem.A)
            lemma = TheoryService.mu_and_lemma_XZc(build(problem, split))
            self.assertEqual(lemma.branch, LemmaBranch.DEFICIENT)
            self.assertAlmostEqual(lemma.lambda_max, 1.0, delta=1e-8)
            self.assertEqual(lemma.coefficient, 1.0)

    def test_orthogonal_complement_has_no_mu(self):
        lemma = TheoryService.mu_and_lemma_XZc(a_orthogonal_hierarchy(2))
        self.assertEqual(lemma.branch, LemmaBranch.DEFICIENT)
        self.assertIsNone(lemma.mu)
        self.assertAlmostEqual(lemma.lambda_max, 1.0, delta=1e-8)

    def test_orthogonal_complement_is_deficient_despite_roundoff(self):
        for seed in range(10):
            h = a_orthogonal_hierarchy(seed)
            self.assertEqual(h.rank_SAP, 0, msg=f'seed {seed}')
            lemma = TheoryService.mu_and_lemma_XZc(h)
            self.assertEqual(lemma.branch, LemmaBranch.DEFICIENT)
            self.assertIsNone(lemma.mu)
            self.assertLessEqual(lemma.gap, 1e-8)
            report = TheoryService.verify_all(h)
            self.assertTrue(report.passed, msg=[c.name for c in report.failures])

    def test_standard_1d_splitting_is_deficient(self):
        h = build(poisson1d(7), standard_splitting_1d(7))
        self.assertEqual(h.rank_SAP, 0)
        self.assertEqual(TheoryService.mu_and_lemma_XZc(h).branch, LemmaBranch.DEFICIENT)


class SigmaTest(SimpleTestCase):
    def test_exact_coarse_solve_recovers_convergence_factor(self):
        h = random_hierarchy(4)
        self.assertAlmostEqual(TheoryService.sigma_ITL(h, 0.0), energy_operator_norm(h, assemble_E_TL(h)), delta=1e-9)

    def test_deficient_branch_adds_eps(self):
        h = build(poisson1d(7), standard_splitting_1d(7))
        K, _ = TheoryService.K_TL(h, supinf=False)
        self.assertAlmostEqual(TheoryService.sigma_ITL(h, 0.999), 1.0 - 1.0 / K + 0.999, delta=1e-12)

    def test_full_rank_branch_scales_eps(self):
        h = random_hierarchy(5)
        lemma = TheoryService.mu_and_lemma_XZc(h)
        slope = TheoryService.sigma_ITL(h, 0.5) - TheoryService.sigma_ITL(h, 0.0)
        self.assertAlmostEqual(slope, 0.5 * (1.0 - lemma.mu), delta=1e-10)

    def test_eps_out_of_range(self):
        h = random_hierarchy(5)
        with self.assertRaises(InvalidSize):
            TheoryService.sigma_ITL(h, 1.0)
        with self.assertRaises(InvalidSize):
            TheoryService.sigma_ITL(h, -0.1)


class NoPostsmoothingTest(SimpleTestCase):
    def test_exact_endpoint(self):
        for seed in range(4):
            h = random_hierarchy(seed)
            self.assertAlmostEqual(TheoryService.bounds_no_postsmoothing(h, 0.0), no_postsmoothing_factor(h), delta=1e-9)

    def test_two_grid_at_zero_eps(self):
        problem, P, M = random_two_grid(1)
        A = problem.A.entries
        K = TheoryService.K_TG(A, P, M)
        self.assertAlmostEqual(TheoryService.bounds_no_postsmoothing((A, P, M), 0.0), np.sqrt(1.0 - 1.0 / K), delta=1e-12)
        self.assertLessEqual(TheoryService.bounds_no_postsmoothing((A, P, M), 0.0), 1.0)

    def test_two_grid_bound_is_tighter(self):
        for seed in range(20):
            problem, P, M = random_two_grid(seed)
            h = TwoLevelService.two_grid_hierarchy(problem, P, M)
            for eps in (0.1, 0.5, 0.9):
                two_grid = TheoryService.bounds_no_postsmoothing((problem.A.entries, P, M), eps)
                two_level = TheoryService.bounds_no_postsmoothing(h, eps)
                self.assertLessEqual(two_grid, two_level + 1e-9)


class CorollaryTest(SimpleTestCase):
    def test_zero_eps(self):
        problem, P, M = random_two_grid(2)
        A = problem.A.entries
        self.assertAlmostEqual(TheoryService.corollary_ITG_bound(A, P, M, 0.0), 1.0 - 1.0 / TheoryService.K_TG(A, P, M), delta=1e-12)

    def test_mu_matches_two_grid_hierarchy(self):
        for seed in range(5):
            problem, P, M = random_two_grid(seed)
            h = TwoLevelService.two_grid_hierarchy(problem, P, M)
            mu = TheoryService.two_grid_mu(problem.A.entries, P, M)
            self.assertAlmostEqual(mu, TheoryService.mu_and_lemma_XZc(h).mu, delta=1e-9)

    def test_monotone_in_eps(self):
        problem, P, M = random_two_grid(6)
        values = [TheoryService.corollary_ITG_bound(problem.A.entries, P, M, eps) for eps in np.linspace(0.0, 0.95, 8)]
        self.assertTrue(all(b >= a for a, b in zip(values, values[1:])))


class EpsilonFormulasTest(SimpleTestCase):
    def test_cg(self):
        self.assertEqual(TheoryService.epsilon_formulas(np.eye(3), {'kind': 'cg', 'ell': 3}).epsilon, 0.0)
        one = TheoryService.epsilon_formulas(np.diag([1.0, 9.0]), {'kind': 'cg', 'ell': 1})
        self.assertAlmostEqual(one.epsilon, 1.0, delta=1e-12)
        self.assertFalse(one.applicable)
        two = TheoryService.epsilon_formulas(np.diag([1.0, 9.0]), {'kind': 'cg', 'ell': 2})
        self.assertAlmostEqual(two.epsilon, 0.5, delta=1e-12)
        self.assertTrue(two.applicable)

    def test_rcd(self):
        cert = TheoryService.epsilon_formulas(np.diag([1.0, 3.0]), {'kind': 'rcd', 'ell': 4})
        self.assertAlmostEqual(cert.epsilon, 0.5625, delta=1e-12)
        self.assertEqual(cert.mode, CertMode.IN_EXPECTATION)

    def test_rbcd_single_block_is_exact(self):
        cert = TheoryService.epsilon_formulas(random_spd(4, 10.0, seed=1).A.entries, {'kind': 'rbcd', 'ell': 1, 'block_size': 4})
        self.assertAlmostEqual(cert.epsilon, 0.0, delta=1e-7)

    def test_unknown(self):
        with self.assertRaises(UnknownSolver):
            TheoryService.epsilon_formulas(np.eye(2), {'kind': 'multigrid'})


class VerifyAllTest(SimpleTestCase):
    def test_identities_on_random_instances(self):
        for seed in range(5):
            report = TheoryService.verify_all(random_hierarchy(seed))
            self.assertTrue(report.passed, msg=[c.name for c in report.failures])
            self.assertIn('supinf_rel_gap', report.identity_residuals)
            self.assertNotIn('xz2_gap', report.identity_residuals)

    def test_exact_chain_runs(self):
        h = build(poisson1d(7), standard_splitting_1d(7), 'weighted_jacobi', omega=0.7)
        runs = runs_on(h, RunConfig(), 3, u0=np.random.default_rng(1).standard_normal(7))
        report = TheoryService.verify_all(h, runs)
        self.assertTrue(report.passed, msg=[c.name for c in report.failures])
        self.assertAlmostEqual(report.sigma_ITL, report.norm_E_TL, delta=1e-9)
        for run in runs:
            self.assertLessEqual(run.contraction, report.norm_E_TL + 1e-9)

    def test_cg_chain_bound_holds(self):
        h = build(poisson1d(15), standard_splitting_1d(15))
        cfg = RunConfig(chain=({'kind': 'cg', 'ell': 2},))
        rng = np.random.default_rng(7)
        runs = []
        for _ in range(200):
            _, trace = TwoLevelService.inexact_two_level(h, h.problem.f, rng.standard_normal(h.n), cfg)
            runs.append(trace)
        report = TheoryService.verify_all(h, runs)
        self.assertTrue(report.passed, msg=[c.name for c in report.failures])
        bound_checks = [c for c in report.checks if c.name.endswith('.bound_ITL')]
        self.assertEqual(len(bound_checks), 200)
        for run in runs:
            sigma = TheoryService.sigma_ITL(h, run.sweeps[0].inner.product_eps)
            self.assertLessEqual(run.contraction, sigma + 1e-9)

    def test_no_postsmoothing_runs(self):
        h = random_hierarchy(3)
        cfg = RunConfig(postsmoothing=False, chain=({'kind': 'cg', 'ell': 1},))
        report = TheoryService.verify_all(h, runs_on(h, cfg, 5, u0=np.ones(h.n)))
        self.assertTrue(report.passed, msg=[c.name for c in report.failures])
        self.assertFalse(any(c.name.endswith('.bound_ITL') for c in report.checks))

    def test_rcd_expectation(self):
        h = random_hierarchy(4)
        cfg = RunConfig(nu=2, chain=({'kind': 'rcd', 'ell': 3},))
        runs = runs_on(h, cfg, 200, u0=np.ones(h.n), seed=11)
        report = TheoryService.verify_all(h, runs)
        names = [c.name for c in report.checks]
        self.assertIn('expectation[0].coarse_accuracy_sq', names)
        self.assertTrue(report.passed, msg=[c.name for c in report.failures])

    def test_two_grid_hierarchy(self):
        problem, P, M = random_two_grid(5)
        h = TwoLevelService.two_grid_hierarchy(problem, P, M)
        cfg = RunConfig(chain=({'kind': 'cg', 'ell': 1},))
        rng = np.random.default_rng(8)
        runs = [TwoLevelService.inexact_two_level(h, h.problem.f, rng.standard_normal(h.n), cfg)[1] for _ in range(200)]
        report = TheoryService.verify_all(h, runs)
        self.assertTrue(report.passed, msg=[c.name for c in report.failures])
        for key in ('xz2_gap', 'k_tg_rel_gap', 'corollary_mu_gap', 'projection_min_gap'):
            self.assertIn(key, report.identity_residuals)
        self.assertIsNotNone(report.bound_ITG)

    def test_failed_check_is_recorded(self):
        check = Check.at_most('made_up', 2.0, 1.0)
        self.assertFalse(check.passed)
        self.assertTrue(Check.skip('skipped').passed)
        report = TheoryService.verify_all(random_hierarchy(1))
        report.checks.append(check)
        self.assertFalse(report.passed)
        self.assertEqual(report.to_dict()['checks'][-1]['passed'], False)

    def test_hierarchy_invariants_are_checked(self):
        h = random_hierarchy(2)
        report = TheoryService.verify_all(h)
        for name in ('pi_idempotency', 'a_pi_symmetry', 'lemma_opening_identity', 'inv_gap_lambda_min'):
            self.assertIn(name, report.verdicts())
        self.assertTrue(report.passed, msg=[c.name for c in report.failures])

        h.invariant_residuals['pi_idempotency'] = 1e-3
        h.invariant_residuals['inv_gap_lambda_min'] = -1e-3
        failed = {c.name for c in TheoryService.verify_all(h).failures}
        self.assertEqual(failed, {'pi_idempotency', 'inv_gap_lambda_min'})


class MonteCarloTest(SimpleTestCase):
    def test_rcd_mean_squared_error_within_bound(self):
        for n_c in (2, 3, 4):
            A_c = random_spd(n_c, 10.0, seed=n_c).A.entries
            r = np.random.default_rng(n_c).standard_normal(n_c)
            for ell in (1, 2, 4, 8):
                solver = RcdSolver(ell)
                est = squared_error_estimate(A_c, r, solver, 100000, np.random.default_rng(100 * n_c + ell))
                self.assertLessEqual(est.mean, solver.epsilon_apriori(A_c).epsilon ** 2 + 3.0 * est.se)

    def test_rbcd_mean_squared_error_within_bound(self):
        A_c = random_spd(6, 20.0, seed=4).A.entries
        r = np.random.default_rng(4).standard_normal(6)
        solver = RbcdSolver(3, block_size=2)
        est = squared_error_estimate(A_c, r, solver, 50000, np.random.default_rng(5))
        self.assertLessEqual(est.mean, solver.epsilon_apriori(A_c).epsilon ** 2 + 3.0 * est.se)

    def test_rbcd_expectation_matrix(self):
        A_c = random_spd(4, 15.0, seed=8).A.entries
        solver = RbcdSolver(1, blocks=[[0, 2], [1, 3]])
        mean, se = rbcd_expectation_estimate(A_c, solver, 100000, np.random.default_rng(9))
        exact = solver.expectation_matrix(A_c)
        self.assertTrue(np.all(np.abs(mean - exact) <= 3.0 * se + 1e-12))

    def test_two_grid_rcd_contraction(self):
        problem = poisson2d(5)
        P = standard_splitting_2d(5).P
        M = np.diag(np.diag(problem.A.entries)) / 0.8
        h = TwoLevelService.two_grid_hierarchy(problem, P, M)
        cfg = RunConfig(chain=({'kind': 'rcd', 'ell': 4},))
        runs = runs_on(h, cfg, 2000, u0=np.random.default_rng(2).standard_normal(h.n), seed=21)
        cert = runs[0].cert
        self.assertEqual(cert.mode, CertMode.IN_EXPECTATION)
        est = mean_and_se([run.contraction for run in runs])
        bound = TheoryService.corollary_ITG_bound(problem.A.entries, P, M, cert.epsilon)
        self.assertLessEqual(est.mean, bound + 3.0 * est.se)

    def test_mean_and_se(self):
        est = mean_and_se([1.0, 3.0])
        self.assertEqual(est.mean, 2.0)
        assert_allclose(est.se, 1.0)
        with self.assertRaises(InvalidSize):
            mean_and_se([])
