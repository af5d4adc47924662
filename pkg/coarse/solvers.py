"""
Coarse solvers r -> e ~ A_c^{-1} r.

Every solver starts from a zero initial guess, may consume randomness only
through the generator it is handed, and reports an a-priori accuracy
certificate for a given A_c.
"""

import logging

import numpy as np
import scipy.linalg

from kernel.exceptions import BreakdownNumerical, InvalidSize, NotSPD, SingularBlock, UnknownSolver
from kernel.models import SymMatrix
from kernel.utils import cholesky, cholesky_solve, generalized_sym_eig, spectrum_of_spsd_product, sym_eig

from .models import AccuracyCert, CertMode, SolverKind

logger = logging.getLogger(__name__)

CG_STOP_RTOL = 1e-15


def _entries(A_c):
    return np.asarray(A_c, dtype=np.float64)


class CoarseSolver:
    kind = None

    @property
    def label(self):
        return self.kind.value

    def apply(self, A_c, r, rng=None):
        raise NotImplementedError

    def epsilon_apriori(self, A_c):
        raise NotImplementedError

    def __repr__(self):
        return f'<{type(self).__name__} {self.label}>'


class ExactSolver(CoarseSolver):
    """Cholesky solve with the factor cached on the hierarchy"""
    kind = SolverKind.EXACT

    def __init__(self, h=None):
        self.h = h

    def apply(self, A_c, r, rng=None):
        r = np.asarray(r, dtype=np.float64)
        if self.h is not None:
            return self.h.solve_A_c(r)
        return cholesky_solve(cholesky(SymMatrix(A_c)), r)

    def epsilon_apriori(self, A_c):
        return AccuracyCert.of(0.0, CertMode.DETERMINISTIC, self.label)


class CgSolver(CoarseSolver):
    """ell conjugate gradient steps from zero, optionally with diagonal scaling"""
    kind = SolverKind.CG

    def __init__(self, ell, diagonal=False):
        if ell < 1:
            raise InvalidSize(f"CG needs ell >= 1, got {ell}")
        self.ell = int(ell)
        self.diagonal = bool(diagonal)

    @property
    def label(self):
        prefix = 'pcg' if self.diagonal else 'cg'
        return f'{prefix}({self.ell})'

    def apply(self, A_c, r, rng=None):
        A = _entries(A_c)
        b = np.asarray(r, dtype=np.float64)
        x = np.zeros_like(b)
        d = np.diag(A) if self.diagonal else None

        res = b.copy()
        z = res / d if self.diagonal else res
        rz = float(res @ z)
        p = z.copy()
        tol_sqr = (CG_STOP_RTOL * np.linalg.norm(b)) ** 2

        for k in range(self.ell):
            if float(res @ res) <= tol_sqr:
                break
            v = A @ p
            pAp = float(p @ v)
            if pAp <= 0.0:
                raise BreakdownNumerical(f"CG step {k + 1}: p^T A_c p = {pAp:.3e}")
            alpha = rz / pAp
            x += alpha * p
            res -= alpha * v
            z = res / d if self.diagonal else res
            rz_new = float(res @ z)
            p = z + (rz_new / rz) * p
            rz = rz_new
        return x

    def condition_number(self, A_c):
        A = _entries(A_c)
        if self.diagonal:
            scale = 1.0 / np.sqrt(np.diag(A))
            A = scale[:, None] * A * scale[None, :]
        values = sym_eig(A).values
        return float(values[-1] / values[0])

    def epsilon_apriori(self, A_c):
        kappa = self.condition_number(A_c)
        q = (np.sqrt(kappa) - 1.0) / (np.sqrt(kappa) + 1.0)
        return AccuracyCert.of(2.0 * q ** self.ell, CertMode.DETERMINISTIC, self.label)

    @staticmethod
    def threshold_steps(kappa):
        """ell must exceed this for the CG certificate to drop below 1"""
        if kappa <= 1.0:
            return 0.0
        return 1.0 / np.log2((np.sqrt(kappa) + 1.0) / (np.sqrt(kappa) - 1.0))


class RcdSolver(CoarseSolver):
    """
    Randomized coordinate descent: ell exact solves of single equations, the
    index drawn with probability (A_c)_ii / tr(A_c).
    """
    kind = SolverKind.RCD

    def __init__(self, ell):
        if ell < 1:
            raise InvalidSize(f"RCD needs ell >= 1, got {ell}")
        self.ell = int(ell)

    @property
    def label(self):
        return f'rcd({self.ell})'

    @staticmethod
    def probabilities(A_c):
        d = np.diag(_entries(A_c))
        return d / d.sum()

    def draw(self, A_c, rng, size=None):
        shape = self.ell if size is None else (size, self.ell)
        return rng.choice(len(np.diag(_entries(A_c))), size=shape, p=self.probabilities(A_c))

    def apply(self, A_c, r, rng=None):
        A = _entries(A_c)
        r = np.asarray(r, dtype=np.float64)
        e = np.zeros_like(r)
        for i in self.draw(A, rng):
            e[i] += (r[i] - A[i] @ e) / A[i, i]
        return e

    def epsilon_apriori(self, A_c):
        A = _entries(A_c)
        rate = 1.0 - sym_eig(A).lambda_min / float(np.trace(A))
        return AccuracyCert.of(max(rate, 0.0) ** (self.ell / 2.0), CertMode.IN_EXPECTATION, self.label)


def consecutive_blocks(n_c, block_size):
    if block_size < 1:
        raise InvalidSize(f"block_size must be >= 1, got {block_size}")
    return [np.arange(start, min(start + block_size, n_c)) for start in range(0, n_c, block_size)]


class RbcdSolver(CoarseSolver):
    """
    Randomized block coordinate descent (randomized Newton): each step solves
    exactly on a block drawn uniformly from a fixed partition.
    """
    kind = SolverKind.RBCD

    def __init__(self, ell, blocks=None, block_size=None):
        if ell < 1:
            raise InvalidSize(f"RBCD needs ell >= 1, got {ell}")
        if blocks is None and block_size is None:
            raise InvalidSize("RBCD needs blocks or block_size")
        self.ell = int(ell)
        self.block_size = block_size
        self._blocks = None if blocks is None else [np.asarray(b, dtype=int) for b in blocks]

    @property
    def label(self):
        if self._blocks is not None:
            return f'rbcd({self.ell}, {len(self._blocks)} blocks)'
        return f'rbcd({self.ell}, size {self.block_size})'

    def blocks(self, n_c):
        blocks = self._blocks if self._blocks is not None else consecutive_blocks(n_c, self.block_size)
        covered = np.concatenate(blocks) if blocks else np.array([], dtype=int)
        if any(len(b) == 0 for b in blocks) or len(covered) != n_c or not np.array_equal(np.sort(covered), np.arange(n_c)):
            raise InvalidSize(f"RBCD blocks must be a nonempty partition of 0..{n_c - 1}")
        return blocks

    def block_factors(self, A_c):
        A = _entries(A_c)
        factors = []
        for b in self.blocks(A.shape[0]):
            try:
                factors.append(cholesky(SymMatrix(A[np.ix_(b, b)])))
            except NotSPD as e:
                raise SingularBlock(f"Block {b.tolist()} is not SPD: {e}") from e
        return factors

    def apply(self, A_c, r, rng=None):
        A = _entries(A_c)
        r = np.asarray(r, dtype=np.float64)
        blocks = self.blocks(A.shape[0])
        factors = self.block_factors(A)
        e = np.zeros_like(r)
        for j in rng.integers(len(blocks), size=self.ell):
            b = blocks[j]
            e[b] += cholesky_solve(factors[j], r[b] - A[b] @ e)
        return e

    def expectation_inverse(self, A_c):
        """Mean over blocks of I_b (A_c)_bb^{-1} I_b^T"""
        A = _entries(A_c)
        n_c = A.shape[0]
        blocks = self.blocks(n_c)
        Z = np.zeros((n_c, n_c))
        for b, L in zip(blocks, self.block_factors(A)):
            Z[np.ix_(b, b)] += cholesky_solve(L, np.eye(len(b)))
        return Z / len(blocks)

    def expectation_matrix(self, A_c):
        return self.expectation_inverse(A_c) @ _entries(A_c)

    def epsilon_apriori(self, A_c):
        lam_min = float(spectrum_of_spsd_product(SymMatrix(A_c), self.expectation_inverse(A_c))[0])
        return AccuracyCert.of(max(1.0 - lam_min, 0.0) ** (self.ell / 2.0), CertMode.IN_EXPECTATION, self.label)


class StationarySolver(CoarseSolver):
    """
    One application of a fixed SPD preconditioner B_c.

    B_c is either given or built from A_c: jacobi uses diag(A_c)/scale,
    scaled uses scale * A_c.
    """
    kind = SolverKind.STATIONARY

    def __init__(self, B_c=None, preconditioner='jacobi', scale=1.0):
        self.B_c = None if B_c is None else SymMatrix(B_c)
        self.preconditioner = 'explicit' if B_c is not None else preconditioner
        if self.preconditioner not in ('explicit', 'jacobi', 'scaled'):
            raise UnknownSolver(f"Unknown stationary preconditioner '{preconditioner}'")
        if scale <= 0.0:
            raise InvalidSize(f"scale must be positive, got {scale}")
        self.scale = float(scale)

    @property
    def label(self):
        if self.preconditioner == 'explicit':
            return 'stationary(B_c)'
        return f'stationary({self.preconditioner}, {self.scale:g})'

    def preconditioner_for(self, A_c):
        if self.B_c is not None:
            return self.B_c
        A = _entries(A_c)
        if self.preconditioner == 'jacobi':
            return SymMatrix(np.diag(np.diag(A)) / self.scale)
        return SymMatrix(self.scale * A)

    def apply(self, A_c, r, rng=None):
        L = cholesky(self.preconditioner_for(A_c))
        return scipy.linalg.cho_solve((L, True), np.asarray(r, dtype=np.float64))

    def spectrum(self, A_c):
        """lambda(B_c^{-1} A_c), ascending"""
        return generalized_sym_eig(_entries(A_c), self.preconditioner_for(A_c))

    def epsilon_apriori(self, A_c):
        values = self.spectrum(A_c)
        if values[0] <= 0.0 or values[-1] >= 2.0:
            logger.warning(f"{self.label}: spectrum of B_c^-1 A_c in [{values[0]:.4g}, {values[-1]:.4g}] leaves (0, 2)")
        eps = float(np.max(np.abs(1.0 - values)))
        return AccuracyCert.of(eps, CertMode.DETERMINISTIC, self.label)


def solver_from_spec(spec, h=None):
    """
    Build a solver from a config mapping such as {"kind": "cg", "ell": 4}.

    Accepts plain dicts and pydantic models.
    """
    if hasattr(spec, 'model_dump'):
        spec = spec.model_dump(exclude_none=True)
    spec = dict(spec)
    kind = spec.get('kind')
    if kind == SolverKind.EXACT:
        return ExactSolver(h)
    if kind == SolverKind.CG:
        return CgSolver(spec.get('ell', 1), diagonal=spec.get('diagonal', False))
    if kind == SolverKind.RCD:
        return RcdSolver(spec.get('ell', 1))
    if kind == SolverKind.RBCD:
        return RbcdSolver(spec.get('ell', 1), blocks=spec.get('blocks'), block_size=spec.get('block_size'))
    if kind == SolverKind.STATIONARY:
        return StationarySolver(
            B_c=spec.get('B_c'),
            preconditioner=spec.get('preconditioner', 'jacobi'),
            scale=spec.get('scale', 1.0),
        )
    raise UnknownSolver(f"Unknown coarse solver kind '{kind}'")
