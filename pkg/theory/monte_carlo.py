"""
Vectorized Monte Carlo estimators for the randomized coarse solvers.

All trials run at once as the rows of a (trials, n_c) array, so the inner
loop is over solver steps only. Every estimator returns a sample mean
together with its standard error.
"""

import logging
from dataclasses import dataclass

import numpy as np

from coarse.solvers import RbcdSolver, RcdSolver
from kernel.exceptions import InvalidSize
from kernel.models import SymMatrix
from kernel.utils import cholesky, cholesky_solve

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Estimate:
    mean: float
    se: float
    trials: int

    def to_dict(self):
        return {'mean': self.mean, 'se': self.se, 'trials': self.trials}


def mean_and_se(samples):
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if samples.size == 0:
        raise InvalidSize("Cannot estimate a mean from zero samples")
    se = float(samples.std(ddof=1) / np.sqrt(samples.size)) if samples.size > 1 else float('nan')
    return Estimate(mean=float(samples.mean()), se=se, trials=int(samples.size))


def _relative_squared_errors(A, r, E):
    x = cholesky_solve(cholesky(SymMatrix(A)), r)
    err = x[None, :] - E
    ref = float(r @ x)
    return np.einsum('ti,ij,tj->t', err, A, err) / ref


def rcd_squared_errors(A_c, r, ell, trials, rng):
    """||A_c^-1 r - e||^2_{A_c} / ||r||^2_{A_c^-1} for each of `trials` RCD runs"""
    A = np.asarray(A_c, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    solver = RcdSolver(ell)
    picks = solver.draw(A, rng, size=trials)
    rows = np.arange(trials)
    E = np.zeros((trials, A.shape[0]))
    for j in range(solver.ell):
        i = picks[:, j]
        residual = r[i] - np.einsum('tk,tk->t', A[i], E)
        E[rows, i] += residual / A[i, i]
    return _relative_squared_errors(A, r, E)


def rbcd_squared_errors(A_c, r, solver, trials, rng):
    """Same as rcd_squared_errors for an RbcdSolver; trials sharing a block are updated together"""
    if not isinstance(solver, RbcdSolver):
        raise InvalidSize(f"Expected an RBCD solver, got {solver!r}")
    A = np.asarray(A_c, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    blocks = solver.blocks(A.shape[0])
    factors = solver.block_factors(A)
    picks = rng.integers(len(blocks), size=(trials, solver.ell))
    E = np.zeros((trials, A.shape[0]))
    for j in range(solver.ell):
        for k, (b, L) in enumerate(zip(blocks, factors)):
            rows = np.flatnonzero(picks[:, j] == k)
            if rows.size == 0:
                continue
            residual = r[b][:, None] - A[b] @ E[rows].T
            E[np.ix_(rows, b)] += cholesky_solve(L, residual).T
    return _relative_squared_errors(A, r, E)


def squared_error_estimate(A_c, r, solver, trials, rng):
    if isinstance(solver, RcdSolver):
        samples = rcd_squared_errors(A_c, r, solver.ell, trials, rng)
    else:
        samples = rbcd_squared_errors(A_c, r, solver, trials, rng)
    est = mean_and_se(samples)
    logger.debug(f"{solver.label}: mean squared error {est.mean:.6e} +- {est.se:.2e} over {trials} trials")
    return est


def rbcd_expectation_estimate(A_c, solver, trials, rng):
    """
    Sample mean of W_b = I_b (A_c)_bb^{-1} I_b^T A_c over uniformly drawn
    blocks, with the entrywise standard error.
    """
    A = np.asarray(A_c, dtype=np.float64)
    n_c = A.shape[0]
    blocks = solver.blocks(n_c)
    samples = []
    for b, L in zip(blocks, solver.block_factors(A)):
        W = np.zeros((n_c, n_c))
        W[b, :] = cholesky_solve(L, A[b, :])
        samples.append(W)
    samples = np.array(samples)

    counts = np.bincount(rng.integers(len(blocks), size=trials), minlength=len(blocks))
    weights = counts / trials
    mean = np.einsum('k,kij->ij', weights, samples)
    second = np.einsum('k,kij->ij', weights, samples ** 2)
    variance = np.clip(second - mean ** 2, 0.0, None) * trials / max(trials - 1, 1)
    return mean, np.sqrt(variance / trials)
