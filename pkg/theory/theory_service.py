import logging
from collections import defaultdict

import numpy as np
import scipy.linalg
from django.conf import settings

from coarse.solvers import solver_from_spec
from engine.operators import (
    assemble_B_TL, assemble_E_TG, assemble_E_TL, energy_norm_of, energy_operator_norm, energy_symmetrized,
    no_postsmoothing_factor, preconditioner_residuals,
)
from hierarchy.hierarchy_service import INVARIANT_TOL, SPSD_RTOL
from hierarchy.models import Hierarchy
from kernel.exceptions import BranchMismatch, InvalidSize, NegativeRadicand, SubspaceMismatch
from kernel.models import SymMatrix
from kernel.utils import (
    RANK_TOL, cholesky, cholesky_solve, generalized_sym_eig, lambda_min_positive, pseudo_inverse,
    spectrum_of_spsd_product, sym_eig,
)

from .models import Check, LemmaBranch, LemmaXZc, TheoryReport
from .monte_carlo import mean_and_se

logger = logging.getLogger(__name__)

XZ1_TOL = 1e-9
XZ2_TOL = 1e-9
XZC_TOL = 1e-8
SUPINF_RTOL = 1e-7
NO_POST_TOL = 1e-9
ETL2_TOL = 1e-9
B_TL_TOL = 1e-9
HIERARCHICAL_TOL = 1e-9
ORACLE_TOL = 1e-8
MU_CROSS_TOL = 1e-9
PROJECTION_TOL = 1e-9
B_MINUS_A_TOL = 1e-10
ETL_SYM_TOL = 1e-12
SUBSPACE_RTOL = 1e-8
RADICAND_TOL = 1e-12
BOUND_TOL = 1e-9
ACCU_TOL = 1e-10
SANDWICH_RTOL = 1e-10
# Monte Carlo checks allow the sample mean this many standard errors of slack
SE_FACTOR = 3.0

UPPER_LIMITS = {
    'xz1_gap': XZ1_TOL,
    'spectral_radius_gap': XZ1_TOL,
    'supinf_rel_gap': SUPINF_RTOL,
    'xzc_gap': XZC_TOL,
    'no_post_factor_gap': NO_POST_TOL,
    'etl2_residual': ETL2_TOL,
    'b_tl_lambda_max_gap': B_TL_TOL,
    'hierarchical_b_gap': HIERARCHICAL_TOL,
    'unsymmetric_oracle_gap': ORACLE_TOL,
    'xz2_gap': XZ2_TOL,
    'k_tg_rel_gap': SUPINF_RTOL,
    'corollary_mu_gap': MU_CROSS_TOL,
    'projection_min_gap': PROJECTION_TOL,
    'pi_idempotency': INVARIANT_TOL,
    'a_pi_symmetry': INVARIANT_TOL,
    'lemma_opening_identity': INVARIANT_TOL,
}
LOWER_LIMITS = {
    'b_minus_a_lambda_min': -B_MINUS_A_TOL,
    'etl_sym_lambda_min': -ETL_SYM_TOL,
    'inv_gap_lambda_min': -SPSD_RTOL,
}


def _supinf_max_n():
    return getattr(settings, 'ITL_SUPINF_MAX_N', 12)


def _check_eps(eps):
    eps = float(eps)
    if not 0.0 <= eps < 1.0:
        raise InvalidSize(f"epsilon must lie in [0, 1), got {eps}")
    return eps


def _root(radicand, what):
    if radicand < -RADICAND_TOL or radicand > 1.0 + RADICAND_TOL:
        raise NegativeRadicand(f"{what}: radicand {radicand:.6e} is outside [0, 1]")
    return float(np.sqrt(min(max(radicand, 0.0), 1.0)))


def sigma_formula(K, coefficient, eps):
    return 1.0 - 1.0 / K + eps * coefficient


def no_post_formula(K, eps, lambda_min=0.0):
    return _root(1.0 - (1.0 - eps ** 2) / K - eps ** 2 * lambda_min, 'no-postsmoothing bound')


def mtilde_of(A, M):
    """Mtilde = M^T (M + M^T - A)^{-1} M together with D = M + M^T - A"""
    A = np.asarray(A, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    D = SymMatrix(M + M.T - A)
    return SymMatrix(M.T @ cholesky_solve(cholesky(D), M)), D


def two_grid_operators(A, P, M):
    """(Mtilde, Mtilde^{-1}, Pi_A, Pi_Mtilde) for the smoother M on the whole space"""
    A = np.asarray(A, dtype=np.float64)
    P = np.asarray(P, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    Mtilde, D = mtilde_of(A, M)
    lu = scipy.linalg.lu_factor(M, check_finite=False)
    Mtilde_inv = SymMatrix(scipy.linalg.lu_solve(lu, scipy.linalg.lu_solve(lu, D.entries).T).T)

    Pi_A = P @ cholesky_solve(cholesky(SymMatrix(P.T @ A @ P)), P.T @ A)
    Pi_M = P @ cholesky_solve(cholesky(SymMatrix(P.T @ Mtilde.entries @ P)), P.T @ Mtilde.entries)
    return Mtilde, Mtilde_inv, Pi_A, Pi_M


def projection_minimization_gap(Mtilde, Pi_M, P, samples=20, seed=0):
    """
    Largest relative gap between ||(I - Pi_M)v||_M and min over v_c of
    ||v - P v_c||_M, the latter by least squares in the Cholesky metric.
    """
    Lt = cholesky(Mtilde).T
    P = np.asarray(P, dtype=np.float64)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        v = rng.standard_normal(P.shape[0])
        direct = np.linalg.norm(Lt @ (v - Pi_M @ v))
        coeffs, *_ = np.linalg.lstsq(Lt @ P, Lt @ v, rcond=None)
        best = np.linalg.norm(Lt @ (v - P @ coeffs))
        worst = max(worst, abs(direct - best) / max(np.linalg.norm(Lt @ v), np.finfo(float).tiny))
    return float(worst)


class TheoryService:
    @staticmethod
    def preconditioned_spectrum(h):
        """Eigenvalues of B_TL^{-1} A, from the symmetric A^{1/2} B_TL^{-1} A^{1/2}"""
        return sym_eig(h.A_sqrt @ assemble_B_TL(h).entries @ h.A_sqrt).values

    @staticmethod
    def convergence_factor_TL(h):
        factor = 1.0 - float(TheoryService.preconditioned_spectrum(h)[0])
        cross = sym_eig(energy_symmetrized(h, assemble_E_TL(h))).lambda_max
        if abs(factor - cross) > XZ1_TOL:
            logger.warning(f"{h.problem.label}: 1 - lambda_min(B^-1 A) = {factor:.12e} but lambda_max of E_TL is {cross:.12e}")
        return factor

    @staticmethod
    def K_TL_supinf(h):
        """
        sup over v in Range(I - Pi_A) of (inf over T v_s = v of v_s^T Mtilde_s v_s) / v^T A v.

        With T = (I - Pi_A) S and G = T Mtilde_s^{-1} T^T the infimum is v^T G^+ v,
        so the sup is the top eigenvalue of the pencil (V^T G^+ V, V^T A V) on an
        orthonormal basis V of Range(G). v = 0 is excluded.
        """
        n = h.n
        complement = np.eye(n) - h.Pi_A
        T = complement @ h.S
        G = SymMatrix(T @ h.Mtilde_s_inv.entries @ T.T)
        eig = sym_eig(G)
        top = max(eig.lambda_max, 0.0)
        V = eig.vectors[:, eig.values > RANK_TOL * top]

        if V.shape[1] != n - h.n_c:
            raise SubspaceMismatch(f"Range(G) has dimension {V.shape[1]}, Range(I - Pi_A) has {n - h.n_c}")
        leak = np.linalg.norm(complement - V @ (V.T @ complement)) / max(np.linalg.norm(complement), np.finfo(float).tiny)
        if leak > SUBSPACE_RTOL:
            raise SubspaceMismatch(f"Range(I - Pi_A) is not inside Range(G): relative leak {leak:.3e}")

        X = SymMatrix(V.T @ pseudo_inverse(G).entries @ V)
        Y = SymMatrix(V.T @ h.A.entries @ V)
        return float(generalized_sym_eig(X, Y)[-1])

    @staticmethod
    def K_TL(h, supinf=None):
        """(1 / lambda_min(B_TL^{-1} A), sup-inf value or None when skipped)"""
        spectral = 1.0 / float(TheoryService.preconditioned_spectrum(h)[0])
        if supinf is None:
            supinf = h.n <= _supinf_max_n()
        return spectral, (TheoryService.K_TL_supinf(h) if supinf else None)

    @staticmethod
    def K_TG(A, P, M, operators=None):
        """Top eigenvalue of ((I - Pi_M)^T Mtilde (I - Pi_M), A)"""
        A = np.asarray(A, dtype=np.float64)
        Mtilde, _, _, Pi_M = operators or two_grid_operators(A, P, M)
        complement = np.eye(A.shape[0]) - Pi_M
        X = SymMatrix(complement.T @ Mtilde.entries @ complement)
        return float(generalized_sym_eig(X, SymMatrix(A))[-1])

    @staticmethod
    def lambda_min_Mtilde_inv_A(A, M, operators=None):
        Mtilde = operators[0] if operators else mtilde_of(A, M)[0]
        return float(generalized_sym_eig(SymMatrix(A), Mtilde)[0])

    @staticmethod
    def mu_and_lemma_XZc(h, strict=True):
        """
        lambda_max((I - Z A) Pi_A) with Z = S Mtilde_s^{-1} S^T, as the spectrum of
        (A^{-1} - Z)^{1/2} A Pi_A (A^{-1} - Z)^{1/2}, and mu_TL as the smallest
        positive eigenvalue of Z A Pi_A.
        """
        A = h.A.entries
        Z = h.S @ h.Mtilde_s_inv.entries @ h.S.T
        A_Pi = SymMatrix(A @ h.Pi_A)
        lambda_max = float(spectrum_of_spsd_product(SymMatrix(h.A_inv.entries - Z), A_Pi.entries)[-1])
        # Z <= A^{-1}, so the spectrum of Z A Pi_A lies in [0, 1]
        mu = lambda_min_positive(spectrum_of_spsd_product(A_Pi, Z), scale=1.0)

        if h.rank_SAP == h.n_c:
            branch = LemmaBranch.FULL_RANK
            gap = abs(lambda_max - (1.0 - mu)) if mu is not None else float('inf')
        else:
            branch = LemmaBranch.DEFICIENT
            gap = abs(lambda_max - 1.0)

        if gap > XZC_TOL:
            message = f"{h.problem.label}: {branch.value} branch off by {gap:.3e} (lambda_max={lambda_max:.12e}, mu={mu})"
            if strict:
                raise BranchMismatch(message)
            logger.warning(message)
        return LemmaXZc(mu=mu, lambda_max=lambda_max, branch=branch, gap=gap)

    @staticmethod
    def sigma_ITL(h, eps, K=None, lemma=None):
        eps = _check_eps(eps)
        K = K if K is not None else TheoryService.K_TL(h, supinf=False)[0]
        lemma = lemma or TheoryService.mu_and_lemma_XZc(h, strict=False)
        sigma = sigma_formula(K, lemma.coefficient, eps)
        if sigma >= 1.0:
            logger.info(f"{h.problem.label}: sigma_ITL = {sigma:.6f} at eps = {eps:.3e} is not contractive")
        return sigma

    @staticmethod
    def bounds_no_postsmoothing(target, eps, K=None):
        """
        Bound for the method without postsmoothing. target is a Hierarchy for
        the two-level form or an (A, P, M) triple for the two-grid form.
        """
        eps = _check_eps(eps)
        if isinstance(target, Hierarchy):
            K = K if K is not None else TheoryService.K_TL(target, supinf=False)[0]
            return no_post_formula(K, eps)
        A, P, M = target
        operators = two_grid_operators(A, P, M)
        K = TheoryService.K_TG(A, P, M, operators)
        lam = TheoryService.lambda_min_Mtilde_inv_A(A, M, operators)
        return no_post_formula(K, eps, lam)

    @staticmethod
    def two_grid_mu(A, P, M, operators=None):
        """lambda_min^+(Mtilde^{-1} A Pi_A)"""
        A = np.asarray(A, dtype=np.float64)
        _, Mtilde_inv, Pi_A, _ = operators or two_grid_operators(A, P, M)
        return lambda_min_positive(spectrum_of_spsd_product(SymMatrix(A @ Pi_A), Mtilde_inv.entries), scale=1.0)

    @staticmethod
    def corollary_ITG_bound(A, P, M, eps):
        eps = _check_eps(eps)
        operators = two_grid_operators(A, P, M)
        K = TheoryService.K_TG(A, P, M, operators)
        mu = TheoryService.two_grid_mu(A, P, M, operators)
        return sigma_formula(K, 1.0 - (mu if mu is not None else 0.0), eps)

    @staticmethod
    def epsilon_formulas(A_c, spec):
        """A-priori certificate of the solver described by spec on A_c"""
        return solver_from_spec(spec).epsilon_apriori(SymMatrix(A_c))

    @staticmethod
    def identity_residuals(h, supinf=None):
        return TheoryService.verify_all(h, supinf=supinf).identity_residuals

    @staticmethod
    def verify_all(h, runs=(), cert=None, supinf=None, strict=False):
        """
        Every theory quantity for h, the identity residuals, and the bound
        checks for runs made on h. Violations become failed checks.
        """
        A = h.A.entries
        label = h.problem.label
        E = assemble_E_TL(h)
        norm_E = energy_operator_norm(h, E)
        if supinf is None:
            supinf = h.n <= _supinf_max_n()
        K, K_supinf = TheoryService.K_TL(h, supinf)
        lemma = TheoryService.mu_and_lemma_XZc(h, strict=strict)
        factor = 1.0 - 1.0 / K

        residuals = {
            'xz1_gap': abs(factor - norm_E),
            'spectral_radius_gap': abs(sym_eig(energy_symmetrized(h, E)).lambda_max - norm_E),
            'xzc_gap': lemma.gap,
            'no_post_factor_gap': abs(no_postsmoothing_factor(h) ** 2 - factor),
        }
        if K_supinf is not None:
            residuals['supinf_rel_gap'] = abs(K_supinf - K) / K
        residuals.update(preconditioner_residuals(h))
        residuals.update(h.invariant_residuals)
        if h.n <= _supinf_max_n():
            residuals['unsymmetric_oracle_gap'] = abs(float(np.max(np.linalg.eigvals(E).real)) - norm_E)

        report = TheoryReport(
            label=label,
            norm_E_TL=norm_E,
            K_TL_spectral=K,
            K_TL_supinf=K_supinf,
            mu_TL=lemma.mu,
            rank_SAP=h.rank_SAP,
            branch=lemma.branch,
            lambda_max_lemma=lemma.lambda_max,
        )

        two_grid = None
        if h.is_two_grid:
            operators = two_grid_operators(A, h.P, h.M_s)
            K_tg = TheoryService.K_TG(A, h.P, h.M_s, operators)
            lam_tg = TheoryService.lambda_min_Mtilde_inv_A(A, h.M_s, operators)
            mu_tg = TheoryService.two_grid_mu(A, h.P, h.M_s, operators)
            residuals['xz2_gap'] = abs((1.0 - 1.0 / K_tg) - energy_norm_of(A, assemble_E_TG(A, h.P, h.M_s)))
            residuals['k_tg_rel_gap'] = abs(K_tg - K) / K_tg
            residuals['corollary_mu_gap'] = abs(mu_tg - lemma.mu) if None not in (mu_tg, lemma.mu) else float('inf')
            residuals['projection_min_gap'] = projection_minimization_gap(operators[0], operators[3], h.P)
            report.K_TG = K_tg
            two_grid = (K_tg, lam_tg, mu_tg)

        report.identity_residuals = {k: float(v) for k, v in residuals.items()}
        report.checks = TheoryService.identity_checks(report)

        cert = cert or (runs[0].cert if runs else None)
        report.epsilon_cert = cert
        if cert is not None and cert.applicable:
            report.sigma_ITL = TheoryService.sigma_ITL(h, cert.epsilon, K=K, lemma=lemma)
            report.bound_no_post = no_post_formula(K, cert.epsilon)
            if two_grid is not None:
                K_tg, lam_tg, mu_tg = two_grid
                report.bound_ITG = sigma_formula(K_tg, 1.0 - (mu_tg or 0.0), cert.epsilon)
                report.bound_ITG_no_post = no_post_formula(K_tg, cert.epsilon, lam_tg)

        report.checks.extend(TheoryService.run_checks(runs, K, lemma, two_grid))

        for check in report.failures:
            logger.warning(f"{label}: check {check.name} failed ({check.value:.6e} {check.relation.value} {check.limit:.6e})")
        logger.info(
            f"{label}: K_TL={K:.6g}, ||E_TL||_A={norm_E:.6f}, branch={lemma.branch.value}, "
            f"{len(report.checks)} checks, {len(report.failures)} failed"
        )
        return report

    @staticmethod
    def identity_checks(report):
        checks = [
            Check.at_least('K_TL_at_least_one', report.K_TL_spectral, 1.0 - XZ1_TOL),
            Check.at_most('norm_E_TL_below_one', report.norm_E_TL, 1.0),
        ]
        if report.branch == LemmaBranch.FULL_RANK and report.mu_TL is not None:
            checks.append(Check.at_most('mu_TL_at_most_one', report.mu_TL, 1.0 + XZC_TOL))
        for name, value in report.identity_residuals.items():
            if name in UPPER_LIMITS:
                checks.append(Check.at_most(name, value, UPPER_LIMITS[name]))
            elif name in LOWER_LIMITS:
                checks.append(Check.at_least(name, value, LOWER_LIMITS[name]))
        return checks

    @staticmethod
    def sweep_checks(name, sweep, postsmoothing, K, lemma, two_grid=None):
        """Accuracy chaining, the residual sandwich and the realized-epsilon bounds for one sweep"""
        inner = sweep.inner
        checks = [Check.at_most(f'{name}.accuracy_product', inner.overall_accuracy, inner.product_eps + ACCU_TOL)]

        acc = inner.overall_accuracy
        if acc < 1.0 and inner.rc_norm > 0.0:
            norm2 = inner.rc_norm ** 2
            slack = 1.0 + SANDWICH_RTOL
            checks += [
                Check.at_least(f'{name}.rTe_lower', inner.rTe * slack, (1.0 - acc) * norm2),
                Check.at_most(f'{name}.cauchy_schwarz', inner.rTe, inner.rc_norm * inner.e_norm * slack),
                Check.at_least(f'{name}.e_lower', inner.e_norm * slack, (1.0 - acc) * inner.rc_norm),
                Check.at_most(f'{name}.e_upper', inner.e_norm, (1.0 + acc) * inner.rc_norm * slack),
            ]

        if sweep.err0 == 0.0:
            return checks
        eps = inner.product_eps
        if eps >= 1.0:
            checks.append(Check.skip(f'{name}.bounds', eps))
            return checks

        checks.append(Check.at_most(f'{name}.bound_no_post', sweep.err2 / sweep.err0, no_post_formula(K, eps) + BOUND_TOL))
        if postsmoothing:
            checks.append(Check.at_most(f'{name}.bound_ITL', sweep.contraction, sigma_formula(K, lemma.coefficient, eps) + BOUND_TOL))
        if two_grid is not None:
            K_tg, lam_tg, mu_tg = two_grid
            checks.append(Check.at_most(f'{name}.bound_ITG_no_post', sweep.err2 / sweep.err0, no_post_formula(K_tg, eps, lam_tg) + BOUND_TOL))
            if postsmoothing:
                bound = sigma_formula(K_tg, 1.0 - (mu_tg or 0.0), eps)
                checks.append(Check.at_most(f'{name}.bound_ITG', sweep.contraction, bound + BOUND_TOL))
        return checks

    @staticmethod
    def expectation_checks(runs, K, lemma):
        """
        Sample-mean analogues for runs with in-expectation certificates, at the
        a-priori epsilon plus SE_FACTOR standard errors. Runs are grouped by
        certificate and postsmoothing.
        """
        groups = defaultdict(list)
        for run in runs:
            if run.cert is None or run.cert.is_deterministic or not run.sweeps or run.sweeps[0].err0 == 0.0:
                continue
            groups[(run.cert.label, run.cert.epsilon, run.postsmoothing)].append(run)

        checks = []
        for j, ((_, eps, postsmoothing), members) in enumerate(sorted(groups.items(), key=lambda kv: kv[0])):
            name = f'expectation[{j}]'
            if len(members) < 2:
                continue
            if eps >= 1.0:
                checks.append(Check.skip(f'{name}.bounds', eps))
                continue
            first = [run.sweeps[0] for run in members]
            acc = mean_and_se([s.inner.overall_accuracy ** 2 for s in first])
            checks.append(Check.at_most(f'{name}.coarse_accuracy_sq', acc.mean, eps ** 2 + SE_FACTOR * acc.se))
            mid = mean_and_se([s.err2 / s.err0 for s in first])
            checks.append(Check.at_most(f'{name}.bound_no_post', mid.mean, no_post_formula(K, eps) + SE_FACTOR * mid.se))
            if postsmoothing:
                est = mean_and_se([s.contraction for s in first])
                bound = sigma_formula(K, lemma.coefficient, eps)
                checks.append(Check.at_most(f'{name}.bound_ITL', est.mean, bound + SE_FACTOR * est.se))
        return checks

    @staticmethod
    def run_checks(runs, K, lemma, two_grid=None):
        checks = []
        for i, run in enumerate(runs):
            for t, sweep in enumerate(run.sweeps):
                checks.extend(TheoryService.sweep_checks(f'run[{i}].sweep[{t}]', sweep, run.postsmoothing, K, lemma, two_grid))
        checks.extend(TheoryService.expectation_checks(runs, K, lemma))
        return checks
