"""
Dense symmetric primitives: Cholesky certification, a Jacobi eigensolver,
pseudoinverse, numeric rank, energy norms and symmetric square roots.

Every function accepts a SymMatrix or anything numpy can turn into a square
array; general matrices are plain float arrays.
"""

import logging

import numpy as np
import scipy.linalg

from .exceptions import NegativeSpectrum, NoConvergence, NotSPD, ShapeMismatch
from .models import EigDecomp, SpdStatus, SymMatrix

logger = logging.getLogger(__name__)

PIVOT_RTOL = 1e-12
RANK_TOL = 1e-10
JACOBI_RTOL = 1e-14
MAX_JACOBI_SWEEPS = 100


def as_sym(A):
    if isinstance(A, SymMatrix):
        return A
    return SymMatrix(A)


def cholesky(A):
    """
    Lower Cholesky factor of A.

    Pivots L_ii^2 must exceed PIVOT_RTOL times the largest diagonal entry.
    The outcome is recorded on A.spd_checked.
    """
    A = as_sym(A)
    if A.n == 0:
        A.spd_checked = SpdStatus.VERIFIED
        return np.zeros((0, 0))

    diag_max = float(np.max(np.diag(A.entries)))
    if diag_max <= 0.0:
        A.spd_checked = SpdStatus.REJECTED
        raise NotSPD(f"Largest diagonal entry {diag_max:.3e} is not positive", pivot=diag_max)

    try:
        L = scipy.linalg.cholesky(A.entries, lower=True, check_finite=True)
    except (scipy.linalg.LinAlgError, ValueError) as e:
        A.spd_checked = SpdStatus.REJECTED
        raise NotSPD(f"Cholesky factorization failed: {e}") from e

    pivots = np.diag(L) ** 2
    k = int(np.argmin(pivots))
    if pivots[k] <= PIVOT_RTOL * diag_max:
        A.spd_checked = SpdStatus.REJECTED
        raise NotSPD(f"Pivot {k} is {pivots[k]:.3e}, below {PIVOT_RTOL:g} x max diagonal", pivot=float(pivots[k]))

    A.spd_checked = SpdStatus.VERIFIED
    return L


def cholesky_solve(L, b):
    """Solve (L L^T) x = b for a factor returned by cholesky"""
    return scipy.linalg.cho_solve((L, True), b, check_finite=False)


def _round_robin_pairs(n):
    """Disjoint index pairs per round; n - 1 rounds (n even) cover every pair once"""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = []
        for i in range(m // 2):
            p, q = players[i], players[m - 1 - i]
            if p < n and q < n:
                pairs.append((min(p, q), max(p, q)))
        if pairs:
            rounds.append((np.array([p for p, _ in pairs]), np.array([q for _, q in pairs])))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _off_norm(a):
    return float(np.linalg.norm(a - np.diag(np.diag(a))))


def sym_eig(A):
    """
    Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Rotations are applied in round-robin order, so each round rotates a set of
    disjoint index pairs at once. Iterates until the off-diagonal Frobenius
    norm is at most JACOBI_RTOL times ||A||_F.
    """
    A = as_sym(A)
    n = A.n
    a = np.array(A.entries, dtype=np.float64)
    v = np.eye(n)
    if n <= 1:
        return EigDecomp(values=np.diag(a).copy(), vectors=v)

    norm_f = float(np.linalg.norm(a))
    threshold = JACOBI_RTOL * norm_f
    rounds = _round_robin_pairs(n)

    sweeps = 0
    while _off_norm(a) > threshold:
        if sweeps >= MAX_JACOBI_SWEEPS:
            raise NoConvergence(f"Jacobi eigensolver did not converge in {MAX_JACOBI_SWEEPS} sweeps (n={n})")
        for P, Q in rounds:
            apq = a[P, Q]
            active = np.abs(apq) > 0.0
            if not np.any(active):
                continue
            P, Q, apq = P[active], Q[active], apq[active]
            app, aqq = a[P, P], a[Q, Q]

            tau = (aqq - app) / (2.0 * apq)
            t = np.where(tau >= 0.0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c

            # A <- A J
            col_p, col_q = a[:, P].copy(), a[:, Q].copy()
            a[:, P] = c * col_p - s * col_q
            a[:, Q] = s * col_p + c * col_q
            # A <- J^T A
            row_p, row_q = a[P, :].copy(), a[Q, :].copy()
            a[P, :] = c[:, None] * row_p - s[:, None] * row_q
            a[Q, :] = s[:, None] * row_p + c[:, None] * row_q
            a[P, Q] = 0.0
            a[Q, P] = 0.0

            vec_p, vec_q = v[:, P].copy(), v[:, Q].copy()
            v[:, P] = c * vec_p - s * vec_q
            v[:, Q] = s * vec_p + c * vec_q
        sweeps += 1

    logger.debug(f"Jacobi eigensolver converged in {sweeps} sweeps (n={n})")
    values = np.diag(a).copy()
    order = np.argsort(values, kind='stable')
    values = values[order]
    vectors = v[:, order]
    values.setflags(write=False)
    vectors.setflags(write=False)
    return EigDecomp(values=values, vectors=vectors)


def _check_spsd(values, rank_tol, what='matrix'):
    scale = max(float(np.max(np.abs(values))), 0.0) if len(values) else 0.0
    lam_min = float(values[0]) if len(values) else 0.0
    if lam_min < -rank_tol * scale:
        raise NegativeSpectrum(f"{what} has eigenvalue {lam_min:.3e} below -{rank_tol:g} x {scale:.3e}", lambda_min=lam_min)
    return scale


def pseudo_inverse(A, rank_tol=RANK_TOL):
    """Moore-Penrose inverse of an SPSD matrix; eigenvalues <= rank_tol * lambda_max map to zero"""
    eig = sym_eig(A)
    scale = _check_spsd(eig.values, rank_tol, 'pseudo_inverse input')
    keep = eig.values > rank_tol * scale
    inv = np.zeros_like(eig.values)
    inv[keep] = 1.0 / eig.values[keep]
    return SymMatrix((eig.vectors * inv) @ eig.vectors.T)


def numeric_rank(B, rank_tol=RANK_TOL, scale=None):
    """
    Number of singular values of B above the tolerance, from the eigenvalues of B^T B.

    The tolerance is applied to the eigenvalues of B^T B, sigma_i^2 > rank_tol * ref^2,
    with ref = sigma_max. A product of factors that can cancel to roundoff
    passes scale (a bound on ||B||_2 built from the factor norms) so that
    ref = max(sigma_max, scale) and pure roundoff counts as rank zero.
    """
    B = np.asarray(B, dtype=np.float64)
    if B.ndim != 2:
        raise ShapeMismatch(f"numeric_rank needs a 2D matrix, got shape {B.shape}")
    if B.size == 0:
        return 0
    values = sym_eig(B.T @ B).values
    top = float(values[-1])
    if scale is not None:
        top = max(top, float(scale) ** 2)
    if top <= 0.0:
        return 0
    return int(np.count_nonzero(values > rank_tol * top))


def product_norm_bound(*factors):
    """||F_1||_2 ||F_2||_2 ... for the factors of a matrix product"""
    return float(np.prod([np.linalg.norm(np.asarray(F, dtype=np.float64), 2) for F in factors]))


def null_space_basis(B, rank_tol=RANK_TOL):
    """Orthonormal basis for the numerical null space of B (columns)"""
    B = np.asarray(B, dtype=np.float64)
    eig = sym_eig(B.T @ B)
    top = max(float(eig.values[-1]), 0.0)
    mask = eig.values <= rank_tol * top if top > 0.0 else np.ones(len(eig.values), dtype=bool)
    return np.array(eig.vectors[:, mask])


def energy_norm(v, A):
    A = as_sym(A)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (A.n,):
        raise ShapeMismatch(f"Vector of length {v.shape} does not match n={A.n}")
    if A.spd_checked != SpdStatus.VERIFIED:
        cholesky(A)
    return float(np.sqrt(max(float(v @ (A.entries @ v)), 0.0)))


def sym_sqrt(A, rank_tol=RANK_TOL):
    eig = sym_eig(A)
    _check_spsd(eig.values, rank_tol, 'sym_sqrt input')
    root = np.sqrt(np.clip(eig.values, 0.0, None))
    return SymMatrix((eig.vectors * root) @ eig.vectors.T)


def inv_sqrt(A):
    A = as_sym(A)
    cholesky(A)
    eig = sym_eig(A)
    return SymMatrix((eig.vectors / np.sqrt(eig.values)) @ eig.vectors.T)


def spectrum_of_spsd_product(X, N, rank_tol=RANK_TOL):
    """
    Eigenvalues of N X for SPSD X, ascending.

    N X is similar (on the range of X) to the symmetric X^{1/2} N X^{1/2},
    whose spectrum is returned.
    """
    root = sym_sqrt(X, rank_tol).entries
    N = np.asarray(N, dtype=np.float64)
    return sym_eig(root @ N @ root).values


def generalized_sym_eig(X, B):
    """Eigenvalues of the pencil (X, B) for symmetric X and SPD B, via L^-1 X L^-T"""
    L = cholesky(B)
    X = np.asarray(X, dtype=np.float64)
    Y = scipy.linalg.solve_triangular(L, X, lower=True)
    Z = scipy.linalg.solve_triangular(L, Y.T, lower=True)
    return sym_eig(Z).values


def lambda_min_positive(values, rank_tol=RANK_TOL, scale=None):
    """
    Smallest eigenvalue above rank_tol * scale, or None when all are numerically zero.

    scale defaults to the largest |eigenvalue|; pass a known bound when the
    spectrum may be pure roundoff.
    """
    values = np.asarray(values)
    if values.size == 0:
        return None
    top = float(np.max(np.abs(values))) if scale is None else float(scale)
    positive = values[values > rank_tol * top]
    if positive.size == 0:
        return None
    return float(np.min(positive))
