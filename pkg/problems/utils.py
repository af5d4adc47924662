"""
Model problems A u = f and the splittings (S, P) that go with them.

Structured problems come from finite-difference Laplacians; random problems
and splittings are seeded so every instance can be regenerated from its
parameters.
"""

import logging

import numpy as np

from kernel.exceptions import InvalidSize, RetriesExhausted, UnsatisfiableFlag
from kernel.models import SymMatrix, as_gen_matrix
from kernel.utils import cholesky, cholesky_solve, null_space_basis, numeric_rank, product_norm_bound

from .models import ProblemInstance, SplittingSpec

logger = logging.getLogger(__name__)

MAX_SPLITTING_RETRIES = 100
SMOOTH_MODES = 4


def _tridiag(m):
    return 2.0 * np.eye(m) - np.eye(m, k=1) - np.eye(m, k=-1)


def _manufactured(A, u_exact, label, params):
    """Build f = A u_exact and recover the reference solution through Cholesky"""
    f = A.entries @ u_exact
    L = cholesky(A)
    u_star = cholesky_solve(L, f)
    f.setflags(write=False)
    u_star.setflags(write=False)
    return ProblemInstance(A=A, f=f, u_star=u_star, label=label, params=params)


def _smooth_vector(points, rng):
    """Random combination of the lowest sine modes sampled at points in (0, 1)"""
    coeffs = rng.standard_normal(SMOOTH_MODES) / np.arange(1, SMOOTH_MODES + 1) ** 2
    modes = np.sin(np.pi * np.outer(points, np.arange(1, SMOOTH_MODES + 1)))
    return modes @ coeffs


def poisson1d(m, seed=0):
    if m < 3:
        raise InvalidSize(f"poisson1d needs m >= 3, got {m}")
    A = SymMatrix(_tridiag(m))
    x = np.arange(1, m + 1) / (m + 1)
    u_exact = _smooth_vector(x, np.random.default_rng(seed))
    return _manufactured(A, u_exact, f'poisson1d(m={m})', {'kind': 'poisson1d', 'm': m, 'seed': seed})


def poisson2d(m, seed=0):
    """5-point Laplacian on an m x m interior grid, lexicographic ordering"""
    if m < 3:
        raise InvalidSize(f"poisson2d needs m >= 3, got {m}")
    T = _tridiag(m)
    eye = np.eye(m)
    A = SymMatrix(np.kron(eye, T) + np.kron(T, eye))

    rng = np.random.default_rng(seed)
    x = np.arange(1, m + 1) / (m + 1)
    u_exact = np.kron(_smooth_vector(x, rng), _smooth_vector(x, rng))
    if not np.any(u_exact):
        u_exact = np.ones(m * m)
    return _manufactured(A, u_exact, f'poisson2d(m={m})', {'kind': 'poisson2d', 'm': m, 'seed': seed})


def random_spd(n, cond_target, seed):
    """Q diag(lambda) Q^T with log-uniform lambda on [1, cond_target], endpoints included"""
    if n < 2:
        raise InvalidSize(f"random_spd needs n >= 2, got {n}")
    if cond_target < 1.0:
        raise InvalidSize(f"cond_target must be >= 1, got {cond_target}")

    rng = np.random.default_rng(seed)
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    Q = Q * np.where(np.diag(R) < 0, -1.0, 1.0)

    lam = np.exp(rng.uniform(0.0, np.log(cond_target), size=n))
    lam[0] = 1.0
    lam[-1] = cond_target
    A = SymMatrix((Q * lam) @ Q.T)

    u_exact = rng.standard_normal(n)
    params = {'kind': 'random_spd', 'n': n, 'cond_target': cond_target, 'seed': seed}
    return _manufactured(A, u_exact, f'random_spd(n={n}, cond={cond_target:g}, seed={seed})', params)


def problem_from_matrix(A, seed=0, label='matrix'):
    """Wrap a given SPD matrix with a seeded manufactured right-hand side"""
    A = A if isinstance(A, SymMatrix) else SymMatrix(A)
    u_exact = np.random.default_rng(seed).standard_normal(A.n)
    return _manufactured(A, u_exact, label, {'kind': 'file', 'n': A.n, 'seed': seed})


def validate_splitting(split, allow_two_grid=False):
    """Dimension and rank checks every splitting must pass"""
    n, n_s, n_c = split.n, split.n_s, split.n_c
    if split.P.shape[0] != n:
        raise InvalidSize(f"S has {n} rows but P has {split.P.shape[0]}")
    two_grid = allow_two_grid and n_s == n
    if not two_grid and not (max(n_s, n_c) < n <= n_s + n_c):
        raise InvalidSize(f"Need max(n_s, n_c) < n <= n_s + n_c, got n={n}, n_s={n_s}, n_c={n_c}")
    if two_grid and not n_c < n:
        raise InvalidSize(f"Two-grid splitting needs n_c < n, got n_c={n_c}, n={n}")

    failures = []
    if numeric_rank(split.S) != n_s:
        failures.append('S is column rank deficient')
    if numeric_rank(split.P) != n_c:
        failures.append('P is column rank deficient')
    if numeric_rank(np.hstack([split.S, split.P])) != n:
        failures.append('(S P) does not span R^n')
    return failures


def _linear_interpolation(m):
    n_c = (m - 1) // 2
    P = np.zeros((m, n_c))
    for j in range(n_c):
        i = 2 * j + 1
        P[i - 1, j] = 0.5
        P[i, j] = 1.0
        P[i + 1, j] = 0.5
    return P


def standard_splitting_1d(m):
    """
    Linear interpolation from the coarse nodes 2, 4, ..., m-1 (1-based) and
    injection at the remaining fine-only nodes; n_s + n_c = m.
    """
    if m < 3 or m % 2 == 0:
        raise InvalidSize(f"standard_splitting_1d needs odd m >= 3, got {m}")
    P = _linear_interpolation(m)
    S = np.eye(m)[:, 0::2]
    return SplittingSpec(S=as_gen_matrix(S), P=as_gen_matrix(P), provenance=f'standard_1d(m={m})')


def standard_splitting_2d(m):
    """Bilinear interpolation from the (even, even) nodes (1-based) plus injection elsewhere"""
    if m < 3 or m % 2 == 0:
        raise InvalidSize(f"standard_splitting_2d needs odd m >= 3, got {m}")
    P1 = _linear_interpolation(m)
    P = np.kron(P1, P1)

    coarse = np.zeros((m, m), dtype=bool)
    coarse[1::2, 1::2] = True
    fine_only = np.flatnonzero(~coarse.ravel())
    S = np.eye(m * m)[:, fine_only]
    return SplittingSpec(S=as_gen_matrix(S), P=as_gen_matrix(P), provenance=f'standard_2d(m={m})')


def random_splitting(n, n_s, n_c, seed, force_rank_deficient_SAP=False, A=None):
    """
    Seeded Gaussian S and P, resampled until the rank conditions hold.

    With force_rank_deficient_SAP the last column of P is replaced by a random
    vector in Null(S^T A), so rank(S^T A P) < n_c. This needs A and n_s < n.
    """
    if force_rank_deficient_SAP:
        if n_s >= n:
            raise UnsatisfiableFlag(f"Null(S^T A) is trivial when n_s = n = {n}")
        if A is None:
            raise UnsatisfiableFlag("A rank-deficient S^T A P needs the matrix A")
    if not (max(n_s, n_c) < n <= n_s + n_c):
        raise InvalidSize(f"Need max(n_s, n_c) < n <= n_s + n_c, got n={n}, n_s={n_s}, n_c={n_c}")

    rng = np.random.default_rng(seed)
    A_entries = None if A is None else np.asarray(A, dtype=np.float64)
    for attempt in range(MAX_SPLITTING_RETRIES):
        S = rng.standard_normal((n, n_s))
        P = rng.standard_normal((n, n_c))
        if force_rank_deficient_SAP:
            basis = null_space_basis(S.T @ A_entries)
            z = basis @ rng.standard_normal(basis.shape[1])
            P[:, -1] = z / np.linalg.norm(z)

        split = SplittingSpec(
            S=as_gen_matrix(S),
            P=as_gen_matrix(P),
            provenance=f'random(n={n}, n_s={n_s}, n_c={n_c}, seed={seed}, deficient={force_rank_deficient_SAP})',
        )
        failures = validate_splitting(split)
        if force_rank_deficient_SAP and numeric_rank(S.T @ A_entries @ P, scale=product_norm_bound(S, A_entries, P)) >= n_c:
            failures.append('S^T A P still has full column rank')
        if not failures:
            if attempt:
                logger.debug(f"random_splitting accepted after {attempt + 1} draws")
            return split
    raise RetriesExhausted(f"No valid splitting after {MAX_SPLITTING_RETRIES} draws (n={n}, n_s={n_s}, n_c={n_c})")


def a_orthogonal_splitting(problem, P, provenance=None):
    """S spanning the A-orthogonal complement of Range(P), so that S^T A P = 0"""
    A = np.asarray(problem.A)
    P = as_gen_matrix(P, rows=problem.n)
    S = null_space_basis(P.T @ A)
    split = SplittingSpec(S=as_gen_matrix(S), P=P, provenance=provenance or f'a_orthogonal({problem.label})')
    failures = validate_splitting(split)
    if failures:
        raise InvalidSize(f"a_orthogonal_splitting: {'; '.join(failures)}")
    return split


def random_prolongation(n, n_c, seed):
    rng = np.random.default_rng(seed)
    return as_gen_matrix(rng.standard_normal((n, n_c)))


def two_grid_splitting(P, provenance='two_grid'):
    P = as_gen_matrix(P)
    n = P.shape[0]
    split = SplittingSpec(S=as_gen_matrix(np.eye(n)), P=P, provenance=provenance)
    failures = validate_splitting(split, allow_two_grid=True)
    if failures:
        raise InvalidSize(f"two_grid_splitting: {'; '.join(failures)}")
    return split
