from dataclasses import dataclass, field

import numpy as np

from kernel.models import GenMatrix, SymMatrix, Vector


@dataclass(frozen=True)
class ProblemInstance:
    """A u = f with a reference solution and a human-readable label"""
    A: SymMatrix
    f: Vector
    u_star: Vector
    label: str
    params: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.A.n


@dataclass(frozen=True)
class SplittingSpec:
    """
    Fine-level basis S (n x n_s) and prolongation P (n x n_c).

    n_s == n is reserved for the two-grid case S = I.
    """
    S: GenMatrix
    P: GenMatrix
    provenance: str

    @property
    def n(self):
        return self.S.shape[0]

    @property
    def n_s(self):
        return self.S.shape[1]

    @property
    def n_c(self):
        return self.P.shape[1]

    @property
    def is_two_grid(self):
        return self.n_s == self.n and np.array_equal(self.S, np.eye(self.n))

    def describe(self):
        return {'n': self.n, 'n_s': self.n_s, 'n_c': self.n_c, 'provenance': self.provenance}
