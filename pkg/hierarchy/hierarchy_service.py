import logging

import numpy as np
import scipy.linalg

from kernel.exceptions import NotSPD, RankCondition, ShapeMismatch, SmootherInvalid
from kernel.models import SymMatrix, as_gen_matrix
from kernel.utils import cholesky, cholesky_solve, generalized_sym_eig, numeric_rank, sym_eig, sym_sqrt

from .models import Hierarchy, Smoother, SmootherKind

logger = logging.getLogger(__name__)

INVARIANT_TOL = 1e-9
SPSD_RTOL = 1e-10


def _validity_factor(M_s, A_s):
    """Cholesky factor of M_s + M_s^T - A_s, or SmootherInvalid carrying its lambda_min"""
    D = SymMatrix(M_s + M_s.T - A_s.entries)
    try:
        return D, cholesky(D)
    except NotSPD:
        lam = sym_eig(D).lambda_min
        raise SmootherInvalid(f"M_s + M_s^T - A_s is not SPD (lambda_min = {lam:.6e})", lambda_min=lam)


def contraction_of(M_s, A_s):
    """||I - M_s^{-1} A_s||_{A_s} for any nonsingular M_s, valid or not"""
    A = np.asarray(A_s, dtype=np.float64)
    E = np.eye(A.shape[0]) - np.linalg.solve(np.asarray(M_s, dtype=np.float64), A)
    top = generalized_sym_eig(E.T @ A @ E, A)[-1]
    return float(np.sqrt(max(top, 0.0)))


class HierarchyService:
    @staticmethod
    def make_smoother(kind, A_s, omega=None, matrix=None):
        """
        Smoother matrix M_s for A_s.

        jacobi uses diag(A_s), weighted_jacobi diag(A_s)/omega, gauss_seidel
        the lower triangle including the diagonal, custom a given matrix.
        Invalid smoothers are reported, never repaired.
        """
        kind = SmootherKind(kind)
        A_s = A_s if isinstance(A_s, SymMatrix) else SymMatrix(A_s)
        diag = np.diag(np.diag(A_s.entries))

        if kind == SmootherKind.JACOBI:
            M_s = diag
        elif kind == SmootherKind.WEIGHTED_JACOBI:
            if omega is None or omega <= 0.0:
                raise SmootherInvalid(f"weighted_jacobi needs a positive omega, got {omega}")
            M_s = diag / omega
        elif kind == SmootherKind.GAUSS_SEIDEL:
            M_s = np.tril(A_s.entries)
        else:
            if matrix is None:
                raise SmootherInvalid("custom smoother needs an explicit matrix")
            M_s = np.asarray(matrix, dtype=np.float64)

        M_s = as_gen_matrix(M_s)
        if M_s.shape != A_s.shape:
            raise ShapeMismatch(f"Smoother is {M_s.shape}, A_s is {A_s.shape}")
        _validity_factor(M_s, A_s)
        return Smoother(M_s=M_s, kind=kind, omega=omega if kind == SmootherKind.WEIGHTED_JACOBI else None)

    @staticmethod
    def assemble(problem, split, smoother):
        A = problem.A
        n = problem.n
        S, P = split.S, split.P
        if S.shape[0] != n or P.shape[0] != n:
            raise ShapeMismatch(f"Splitting has {S.shape[0]} rows, problem has n={n}")
        if smoother.M_s.shape != (split.n_s, split.n_s):
            raise ShapeMismatch(f"Smoother is {smoother.M_s.shape}, expected ({split.n_s}, {split.n_s})")

        rank = numeric_rank(np.hstack([S, P]))
        if rank < n:
            raise RankCondition(f"rank(S P) = {rank} < n = {n}")

        A_chol = cholesky(A)
        A_s = SymMatrix(S.T @ A.entries @ S)
        A_c = SymMatrix(P.T @ A.entries @ P)
        cholesky(A_s)
        A_c_chol = cholesky(A_c)

        M_s = smoother.M_s
        D_s, D_chol = _validity_factor(M_s, A_s)
        Mbar_s = SymMatrix(M_s @ cholesky_solve(D_chol, M_s.T))
        Mtilde_s = SymMatrix(M_s.T @ cholesky_solve(D_chol, M_s))
        for name, M in (('Mbar_s', Mbar_s), ('Mtilde_s', Mtilde_s)):
            try:
                cholesky(M)
            except NotSPD as e:
                raise SmootherInvalid(f"{name} is not SPD for smoother {smoother.label}: {e}") from e
        M_s_lu = scipy.linalg.lu_factor(M_s)

        Pi_A = as_gen_matrix(P @ cholesky_solve(A_c_chol, P.T @ A.entries))

        h = Hierarchy(
            problem=problem,
            split=split,
            smoother=smoother,
            A_s=A_s,
            A_c=A_c,
            D_s=D_s,
            Mbar_s=Mbar_s,
            Mtilde_s=Mtilde_s,
            Pi_A=Pi_A,
            A_chol=A_chol,
            A_c_chol=A_c_chol,
            M_s_lu=M_s_lu,
        )
        h.invariant_residuals.update(HierarchyService.invariant_residuals(h))

        for name in ('pi_idempotency', 'a_pi_symmetry', 'lemma_opening_identity'):
            if h.invariant_residuals[name] > INVARIANT_TOL:
                logger.warning(f"{problem.label}: {name} residual {h.invariant_residuals[name]:.3e} above {INVARIANT_TOL:g}")
        if h.invariant_residuals['inv_gap_lambda_min'] < -SPSD_RTOL:
            logger.warning(f"{problem.label}: A^-1 - S Mtilde^-1 S^T has lambda_min {h.invariant_residuals['inv_gap_lambda_min']:.3e}")

        logger.info(f"Assembled hierarchy for {problem.label}: n={n}, n_s={split.n_s}, n_c={split.n_c}, smoother={smoother.label}")
        return h

    @staticmethod
    def invariant_residuals(h):
        A = h.A.entries
        Pi = h.Pi_A
        scale = h.A.max_abs

        AP = A @ Pi
        root = sym_sqrt(h.A_s).entries
        I_s = np.eye(h.n_s)
        lhs = I_s - root @ h.Mtilde_s_inv.entries @ root
        left = I_s - root @ h.solve_M_s(root)
        right = I_s - root @ h.solve_M_s_T(root)

        gap = h.A_inv.entries - h.S @ h.Mtilde_s_inv.entries @ h.S.T
        gap_values = sym_eig(gap).values
        a_inv_norm = float(sym_eig(h.A_inv).lambda_max)

        return {
            'pi_idempotency': float(np.max(np.abs(Pi @ Pi - Pi))),
            'a_pi_symmetry': float(np.max(np.abs(AP - AP.T))) / scale,
            'lemma_opening_identity': float(np.max(np.abs(lhs - left @ right))),
            'inv_gap_lambda_min': float(gap_values[0]) / a_inv_norm,
        }

    @staticmethod
    def smoother_contraction(h):
        return contraction_of(h.M_s, h.A_s)

    @staticmethod
    def apply_compatible_relaxation(h, u_k, f):
        """u + S M_s^{-1} S^T (f - A u)"""
        residual = np.asarray(f) - h.A.entries @ np.asarray(u_k)
        return np.asarray(u_k) + h.S @ h.solve_M_s(h.S.T @ residual)
