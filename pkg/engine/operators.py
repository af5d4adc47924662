"""
Explicit dense iteration matrices and preconditioners.

These are assembled for verification only; the solver path in
two_level_service never forms them.
"""

import numpy as np

from kernel.models import SymMatrix, as_gen_matrix
from kernel.utils import cholesky, cholesky_solve, inv_sqrt, sym_eig, sym_sqrt


def smoothing_operators(h):
    """K1 = I - S M_s^{-1} S^T A and K2 = I - S M_s^{-T} S^T A"""
    StA = h.S.T @ h.A.entries
    I = np.eye(h.n)
    K1 = I - h.S @ h.solve_M_s(StA)
    K2 = I - h.S @ h.solve_M_s_T(StA)
    return K1, K2


def assemble_E_TL(h):
    K1, K2 = smoothing_operators(h)
    return as_gen_matrix(K2 @ (np.eye(h.n) - h.Pi_A) @ K1)


def assemble_E_TG(A, P, M):
    """(I - M^{-T} A)(I - Pi_A)(I - M^{-1} A)"""
    A = np.asarray(A, dtype=np.float64)
    P = np.asarray(P, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    I = np.eye(A.shape[0])
    A_c_chol = cholesky(SymMatrix(P.T @ A @ P))
    Pi = P @ cholesky_solve(A_c_chol, P.T @ A)
    return as_gen_matrix((I - np.linalg.solve(M.T, A)) @ (I - Pi) @ (I - np.linalg.solve(M, A)))


def assemble_B_TL(h):
    """B_TL^{-1} = S Mbar_s^{-1} S^T + K2 P A_c^{-1} P^T K2^T"""
    _, K2 = smoothing_operators(h)
    Mbar_inv = cholesky_solve(cholesky(h.Mbar_s), np.eye(h.n_s))
    K2P = K2 @ h.P
    return SymMatrix(h.S @ Mbar_inv @ h.S.T + K2P @ h.solve_A_c(K2P.T))


def assemble_B_TL_hierarchical(h):
    """
    [S P] Bhat^{-1} [S P]^T with Bhat = L diag(Mbar_s, A_c) L^T and
    L = [[I, 0], [P^T A S M_s^{-1}, I]].
    """
    n_s, n_c = h.n_s, h.n_c
    X = h.solve_M_s_T(h.SAP)
    L_inv = np.eye(n_s + n_c)
    L_inv[n_s:, :n_s] = -X.T
    middle = np.zeros((n_s + n_c, n_s + n_c))
    middle[:n_s, :n_s] = cholesky_solve(cholesky(h.Mbar_s), np.eye(n_s))
    middle[n_s:, n_s:] = h.A_c_inv.entries
    Bhat_inv = L_inv.T @ middle @ L_inv
    basis = np.hstack([h.S, h.P])
    return SymMatrix(basis @ Bhat_inv @ basis.T)


def energy_symmetrized(h, E):
    """A^{1/2} E A^{-1/2}"""
    return h.A_sqrt @ np.asarray(E) @ h.A_inv_sqrt


def energy_operator_norm(h, E):
    """||E||_A as the largest singular value of A^{1/2} E A^{-1/2}"""
    Y = energy_symmetrized(h, E)
    return float(np.sqrt(max(sym_eig(Y.T @ Y).lambda_max, 0.0)))


def energy_norm_of(A, E):
    """||E||_A for a bare SPD matrix A"""
    root = sym_sqrt(A).entries
    root_inv = inv_sqrt(A).entries
    Y = root @ np.asarray(E) @ root_inv
    return float(np.sqrt(max(sym_eig(Y.T @ Y).lambda_max, 0.0)))


def no_postsmoothing_factor(h):
    """||(I - Pi_A)(I - S M_s^{-1} S^T A)||_A"""
    K1, _ = smoothing_operators(h)
    return energy_operator_norm(h, (np.eye(h.n) - h.Pi_A) @ K1)


def preconditioner_residuals(h):
    """Checks tying B_TL to E_TL and to A"""
    A = h.A.entries
    E = assemble_E_TL(h)
    B_inv = assemble_B_TL(h)
    B_inv_hier = assemble_B_TL_hierarchical(h)

    scale = max(float(np.max(np.abs(B_inv.entries))), 1e-300)
    values = sym_eig(h.A_sqrt @ B_inv.entries @ h.A_sqrt).values
    B = SymMatrix(cholesky_solve(cholesky(B_inv), np.eye(h.n)))
    a_norm2 = sym_eig(h.A).lambda_max

    return {
        'etl2_residual': float(np.max(np.abs(np.eye(h.n) - B_inv.entries @ A - E))),
        'b_tl_lambda_max_gap': float(abs(values[-1] - 1.0)),
        'b_minus_a_lambda_min': float(sym_eig(B.entries - A).lambda_min / a_norm2),
        'hierarchical_b_gap': float(np.max(np.abs(B_inv.entries - B_inv_hier.entries))) / scale,
        'etl_sym_lambda_min': float(sym_eig(energy_symmetrized(h, E)).lambda_min),
    }
