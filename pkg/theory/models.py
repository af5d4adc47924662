from dataclasses import dataclass, field

from django.db import models


class LemmaBranch(models.TextChoices):
    FULL_RANK = 'full_rank', 'rank(S^T A P) = n_c'
    DEFICIENT = 'deficient', 'rank(S^T A P) < n_c'


class Relation(models.TextChoices):
    AT_MOST = '<=', 'at most'
    AT_LEAST = '>=', 'at least'


@dataclass(frozen=True)
class LemmaXZc:
    """lambda_max((I - S Mtilde_s^{-1} S^T A) Pi_A) next to the value the rank branch predicts"""
    mu: float
    lambda_max: float
    branch: LemmaBranch
    gap: float

    @property
    def coefficient(self):
        """The factor multiplying epsilon in the inexact bound"""
        if self.branch == LemmaBranch.FULL_RANK and self.mu is not None:
            return 1.0 - self.mu
        return 1.0


@dataclass(frozen=True)
class Check:
    """A named inequality value <= limit (or >= limit) with its verdict"""
    name: str
    value: float
    limit: float
    relation: Relation = Relation.AT_MOST
    skipped: bool = False

    @classmethod
    def at_most(cls, name, value, limit):
        return cls(name=name, value=float(value), limit=float(limit), relation=Relation.AT_MOST)

    @classmethod
    def at_least(cls, name, value, limit):
        return cls(name=name, value=float(value), limit=float(limit), relation=Relation.AT_LEAST)

    @classmethod
    def skip(cls, name, reason_value=float('nan')):
        return cls(name=name, value=float(reason_value), limit=float('nan'), skipped=True)

    @property
    def passed(self):
        if self.skipped:
            return True
        if self.relation == Relation.AT_MOST:
            return self.value <= self.limit
        return self.value >= self.limit

    def to_dict(self):
        return {
            'name': self.name,
            'value': self.value,
            'limit': self.limit,
            'relation': self.relation.value,
            'passed': self.passed,
            'skipped': self.skipped,
        }


@dataclass
class TheoryReport:
    label: str
    norm_E_TL: float
    K_TL_spectral: float
    K_TL_supinf: float = None
    K_TG: float = None
    mu_TL: float = None
    rank_SAP: int = 0
    branch: LemmaBranch = LemmaBranch.FULL_RANK
    lambda_max_lemma: float = None
    epsilon_cert: object = None
    sigma_ITL: float = None
    bound_no_post: float = None
    bound_ITG: float = None
    bound_ITG_no_post: float = None
    identity_residuals: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    @property
    def failures(self):
        return [c for c in self.checks if not c.passed]

    def verdicts(self):
        return {c.name: c.passed for c in self.checks}

    def to_dict(self):
        return {
            'label': self.label,
            'norm_E_TL': self.norm_E_TL,
            'K_TL_spectral': self.K_TL_spectral,
            'K_TL_supinf': self.K_TL_supinf,
            'K_TG': self.K_TG,
            'mu_TL': self.mu_TL,
            'rank_SAP': self.rank_SAP,
            'branch': self.branch.value,
            'lambda_max_lemma': self.lambda_max_lemma,
            'epsilon_cert': self.epsilon_cert.to_dict() if self.epsilon_cert is not None else None,
            'sigma_ITL': self.sigma_ITL,
            'bound_no_post': self.bound_no_post,
            'bound_ITG': self.bound_ITG,
            'bound_ITG_no_post': self.bound_ITG_no_post,
            'identity_residuals': dict(self.identity_residuals),
            'checks': [c.to_dict() for c in self.checks],
        }
