from dataclasses import dataclass, field

from coarse.models import AccuracyCert, InnerTrace
from coarse.solvers import ExactSolver, solver_from_spec
from kernel.exceptions import InvalidSize


@dataclass(frozen=True)
class RunConfig:
    """
    Outer-iteration settings.

    chain holds solver specs (mappings or CoarseSolver instances). A single
    entry with nu > 1 is repeated nu times; otherwise its length must be nu.
    """
    nu: int = 1
    postsmoothing: bool = True
    outer_sweeps: int = 1
    chain: tuple = ({'kind': 'exact'},)
    seed: int = 0

    def __post_init__(self):
        if self.nu < 1:
            raise InvalidSize(f"nu must be >= 1, got {self.nu}")
        if self.outer_sweeps < 1:
            raise InvalidSize(f"outer_sweeps must be >= 1, got {self.outer_sweeps}")
        if len(self.chain) not in (1, self.nu):
            raise InvalidSize(f"Inner chain has {len(self.chain)} solvers for nu={self.nu}")

    def build_chain(self, h):
        specs = list(self.chain) * self.nu if len(self.chain) == 1 else list(self.chain)
        solvers = []
        for spec in specs:
            if hasattr(spec, 'apply'):
                solvers.append(ExactSolver(h) if isinstance(spec, ExactSolver) and spec.h is None else spec)
            else:
                solvers.append(solver_from_spec(spec, h))
        return solvers


@dataclass(frozen=True)
class SweepRecord:
    """Energy-norm errors ||u - u^(0)||_A, ||u - u^(1)||_A, ||u - u^(2)||_A and after the sweep"""
    err0: float
    err1: float
    err2: float
    err_final: float
    inner: InnerTrace

    @property
    def contraction(self):
        return self.err_final / self.err0 if self.err0 > 0.0 else 0.0


@dataclass
class RunTrace:
    label: str
    postsmoothing: bool
    sweeps: list = field(default_factory=list)
    cert: AccuracyCert = None

    @property
    def err_initial(self):
        return self.sweeps[0].err0 if self.sweeps else 0.0

    @property
    def err_final(self):
        return self.sweeps[-1].err_final if self.sweeps else 0.0

    @property
    def contraction(self):
        """Contraction of the first sweep"""
        return self.sweeps[0].contraction if self.sweeps else 0.0

    @property
    def measured_eps(self):
        """Product of the measured inner accuracies, per sweep"""
        return [s.inner.product_eps for s in self.sweeps]

    def summary(self):
        return {
            'label': self.label,
            'postsmoothing': self.postsmoothing,
            'cert': self.cert.to_dict() if self.cert else None,
            'err_initial': self.err_initial,
            'err_final': self.err_final,
            'sweeps': [
                {
                    'err0': s.err0,
                    'err1': s.err1,
                    'err2': s.err2,
                    'err_final': s.err_final,
                    'contraction': s.contraction,
                    'inner': s.inner.summary(),
                }
                for s in self.sweeps
            ],
        }
