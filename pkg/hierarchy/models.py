from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg
from django.db import models

from kernel.models import GenMatrix, SymMatrix
from kernel.utils import cholesky_solve, inv_sqrt, numeric_rank, product_norm_bound, sym_sqrt
from problems.models import ProblemInstance, SplittingSpec


class SmootherKind(models.TextChoices):
    JACOBI = 'jacobi', 'Jacobi'
    WEIGHTED_JACOBI = 'weighted_jacobi', 'Weighted Jacobi'
    GAUSS_SEIDEL = 'gauss_seidel', 'Gauss-Seidel'
    CUSTOM = 'custom', 'Custom'


@dataclass(frozen=True)
class Smoother:
    M_s: GenMatrix
    kind: SmootherKind
    omega: float = None

    @property
    def label(self):
        if self.kind == SmootherKind.WEIGHTED_JACOBI:
            return f'{self.kind.value}({self.omega:g})'
        return self.kind.value


@dataclass(frozen=True)
class Hierarchy:
    """
    Validated (A, S, P, M_s) with the Galerkin products and derived operators.

    Factorizations are computed once during assembly; everything here is
    read-only afterwards, so a hierarchy may be shared between threads.
    """
    problem: ProblemInstance
    split: SplittingSpec
    smoother: Smoother
    A_s: SymMatrix
    A_c: SymMatrix
    D_s: SymMatrix
    Mbar_s: SymMatrix
    Mtilde_s: SymMatrix
    Pi_A: GenMatrix
    A_chol: GenMatrix
    A_c_chol: GenMatrix
    M_s_lu: tuple
    invariant_residuals: dict = field(default_factory=dict)

    @property
    def A(self):
        return self.problem.A

    @property
    def S(self):
        return self.split.S

    @property
    def P(self):
        return self.split.P

    @property
    def M_s(self):
        return self.smoother.M_s

    @property
    def n(self):
        return self.split.n

    @property
    def n_s(self):
        return self.split.n_s

    @property
    def n_c(self):
        return self.split.n_c

    @property
    def is_two_grid(self):
        return self.split.is_two_grid

    def solve_A(self, b):
        return cholesky_solve(self.A_chol, b)

    def solve_A_c(self, r):
        return cholesky_solve(self.A_c_chol, r)

    def solve_M_s(self, b):
        return scipy.linalg.lu_solve(self.M_s_lu, b, trans=0)

    def solve_M_s_T(self, b):
        return scipy.linalg.lu_solve(self.M_s_lu, b, trans=1)

    @cached_property
    def A_inv(self):
        return SymMatrix(self.solve_A(np.eye(self.n)))

    @cached_property
    def A_c_inv(self):
        return SymMatrix(self.solve_A_c(np.eye(self.n_c)))

    @cached_property
    def Mtilde_s_inv(self):
        # M_s^{-1} D_s M_s^{-T}
        return SymMatrix(self.solve_M_s(self.solve_M_s(self.D_s.entries).T).T)

    @cached_property
    def A_sqrt(self):
        return sym_sqrt(self.A).entries

    @cached_property
    def A_inv_sqrt(self):
        return inv_sqrt(self.A).entries

    @cached_property
    def SAP(self):
        return self.S.T @ self.A.entries @ self.P

    @cached_property
    def rank_SAP(self):
        # S^T A P is often zero up to roundoff, so rank is measured against the factor norms
        return numeric_rank(self.SAP, scale=product_norm_bound(self.S, self.A.entries, self.P))

    def describe(self):
        return {
            'label': self.problem.label,
            'splitting': self.split.describe(),
            'smoother': self.smoother.label,
            'rank_SAP': self.rank_SAP,
            'invariant_residuals': dict(self.invariant_residuals),
        }
