from dataclasses import dataclass, field

import numpy as np
from django.db import models


class CertMode(models.TextChoices):
    DETERMINISTIC = 'deterministic', 'Deterministic'
    IN_EXPECTATION = 'in_expectation', 'In expectation'


class SolverKind(models.TextChoices):
    EXACT = 'exact', 'Exact Cholesky solve'
    CG = 'cg', 'Conjugate gradient'
    RCD = 'rcd', 'Randomized coordinate descent'
    RBCD = 'rbcd', 'Randomized block coordinate descent'
    STATIONARY = 'stationary', 'Stationary preconditioner'


@dataclass(frozen=True)
class AccuracyCert:
    """
    A-priori relative accuracy of a coarse solver.

    applicable is False when epsilon >= 1, in which case the certificate
    cannot be fed into the inexact convergence bounds.
    """
    epsilon: float
    mode: CertMode = CertMode.DETERMINISTIC
    applicable: bool = True
    label: str = ''

    @classmethod
    def of(cls, epsilon, mode=CertMode.DETERMINISTIC, label=''):
        epsilon = float(max(epsilon, 0.0))
        return cls(epsilon=epsilon, mode=CertMode(mode), applicable=epsilon < 1.0, label=label)

    @classmethod
    def chain(cls, certs):
        """Certificate of consecutive inner steps: the product of the step epsilons"""
        eps = float(np.prod([c.epsilon for c in certs])) if certs else 0.0
        in_expectation = any(c.mode == CertMode.IN_EXPECTATION for c in certs)
        mode = CertMode.IN_EXPECTATION if in_expectation else CertMode.DETERMINISTIC
        label = ' -> '.join(c.label for c in certs)
        return cls.of(eps, mode, label)

    @property
    def is_deterministic(self):
        return self.mode == CertMode.DETERMINISTIC

    def to_dict(self):
        return {'epsilon': self.epsilon, 'mode': self.mode.value, 'applicable': self.applicable, 'label': self.label}


@dataclass(frozen=True)
class InnerTrace:
    """
    Record of one coarse correction e_c^(k) = e_c^(k-1) + B_k[r_c - A_c e_c^(k-1)].

    residuals and iterates hold k = 0..nu; measured_eps and certs hold k = 1..nu.
    Norms are exact (computed with the cached Cholesky factor of A_c).
    """
    residuals: list
    iterates: list
    measured_eps: list
    residual_norms: list
    error_norms: list
    certs: list
    rc_norm: float
    e_norm: float
    rTe: float
    steps_taken: int
    short_circuited: bool = False
    labels: list = field(default_factory=list)

    @property
    def nu(self):
        return len(self.measured_eps)

    @property
    def product_eps(self):
        return float(np.prod(self.measured_eps)) if self.measured_eps else 0.0

    @property
    def overall_accuracy(self):
        """||A_c^-1 r_c - e_c^(nu)||_{A_c} / ||r_c||_{A_c^-1}"""
        if self.rc_norm == 0.0:
            return 0.0
        return self.error_norms[-1] / self.rc_norm

    @property
    def chain_cert(self):
        return AccuracyCert.chain(self.certs)

    def summary(self):
        return {
            'labels': list(self.labels),
            'measured_eps': [float(x) for x in self.measured_eps],
            'product_eps': self.product_eps,
            'overall_accuracy': self.overall_accuracy,
            'cert': self.chain_cert.to_dict(),
            'rc_norm': self.rc_norm,
            'e_norm': self.e_norm,
            'rTe': self.rTe,
            'steps_taken': self.steps_taken,
            'short_circuited': self.short_circuited,
        }
