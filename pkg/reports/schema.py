"""
Run-configuration schema.

A run config is a JSON object validated by the pydantic models below.
Relative file paths inside a config are resolved against the config's own
directory.
"""

import json
from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from coarse.models import SolverKind
from hierarchy.models import SmootherKind
from kernel.exceptions import ConfigError

SEED_MAX = (1 << 64) - 1


class StrictModel(BaseModel):
    model_config = ConfigDict(extra='forbid')


class ProblemConfig(StrictModel):
    kind: Literal['poisson1d', 'poisson2d', 'random_spd', 'file']
    m: Optional[int] = Field(default=None, ge=3)
    n: Optional[int] = Field(default=None, ge=2)
    cond_target: float = Field(default=100.0, ge=1.0)
    seed: int = Field(default=0, ge=0, le=SEED_MAX)
    path: Optional[str] = None

    @model_validator(mode='after')
    def required_fields(self):
        if self.kind in ('poisson1d', 'poisson2d') and self.m is None:
            raise ValueError(f"{self.kind} needs m")
        if self.kind == 'random_spd' and self.n is None:
            raise ValueError("random_spd needs n")
        if self.kind == 'file' and not self.path:
            raise ValueError("file problems need path")
        return self


class SplittingConfig(StrictModel):
    kind: Literal['standard', 'random', 'a_orthogonal', 'two_grid', 'file'] = 'standard'
    n_s: Optional[int] = Field(default=None, ge=1)
    n_c: Optional[int] = Field(default=None, ge=1)
    seed: int = Field(default=0, ge=0, le=SEED_MAX)
    force_rank_deficient_SAP: bool = False
    S_path: Optional[str] = None
    P_path: Optional[str] = None

    @model_validator(mode='after')
    def required_fields(self):
        if self.kind == 'random' and (self.n_s is None or self.n_c is None):
            raise ValueError("random splittings need n_s and n_c")
        if self.kind == 'file' and not (self.S_path and self.P_path):
            raise ValueError("file splittings need S_path and P_path")
        if self.force_rank_deficient_SAP and self.kind != 'random':
            raise ValueError("force_rank_deficient_SAP only applies to random splittings")
        return self


class SmootherConfig(StrictModel):
    kind: SmootherKind = SmootherKind.GAUSS_SEIDEL
    omega: Optional[float] = Field(default=None, gt=0.0)
    path: Optional[str] = None

    @model_validator(mode='after')
    def required_fields(self):
        if self.kind == SmootherKind.WEIGHTED_JACOBI and self.omega is None:
            raise ValueError("weighted_jacobi needs omega")
        if self.kind == SmootherKind.CUSTOM and not self.path:
            raise ValueError("custom smoothers need path")
        return self


class SolverConfig(StrictModel):
    kind: SolverKind
    ell: int = Field(default=1, ge=1)
    diagonal: bool = False
    block_size: Optional[int] = Field(default=None, ge=1)
    blocks: Optional[List[List[int]]] = None
    preconditioner: Literal['jacobi', 'scaled'] = 'jacobi'
    scale: float = Field(default=1.0, gt=0.0)

    @model_validator(mode='after')
    def rbcd_partition(self):
        if self.kind == SolverKind.RBCD and self.block_size is None and self.blocks is None:
            raise ValueError("rbcd needs block_size or blocks")
        return self


class InstanceConfig(StrictModel):
    problem: ProblemConfig
    splitting: SplittingConfig = Field(default_factory=SplittingConfig)
    smoother: SmootherConfig = Field(default_factory=SmootherConfig)


class EnsembleConfig(StrictModel):
    default: bool = False
    instances: List[InstanceConfig] = Field(default_factory=list)
    two_grid: bool = True


class ExperimentSpec(StrictModel):
    problem: Optional[ProblemConfig] = None
    splitting: SplittingConfig = Field(default_factory=SplittingConfig)
    smoother: SmootherConfig = Field(default_factory=SmootherConfig)
    inner: List[SolverConfig] = Field(default_factory=lambda: [SolverConfig(kind=SolverKind.EXACT)])
    nu: int = Field(default=1, ge=1)
    postsmoothing: bool = True
    outer_sweeps: int = Field(default=1, ge=1)
    trials: int = Field(default=1, ge=1)
    seed: int = Field(default=0, ge=0, le=SEED_MAX)
    out: Optional[str] = None
    ensemble: Optional[EnsembleConfig] = None

    @field_validator('inner')
    @classmethod
    def nonempty_chain(cls, value):
        if not value:
            raise ValueError("inner needs at least one solver")
        return value

    @model_validator(mode='after')
    def chain_length(self):
        if len(self.inner) not in (1, self.nu):
            raise ValueError(f"inner has {len(self.inner)} solvers for nu={self.nu}")
        return self

    def instances(self):
        """The (problem, splitting, smoother) triples this config names, ensemble first"""
        found = list(self.ensemble.instances) if self.ensemble else []
        if self.problem is not None:
            found.append(InstanceConfig(problem=self.problem, splitting=self.splitting, smoother=self.smoother))
        return found

    def echo(self):
        return self.model_dump(mode='json', exclude_none=True)


def _field_path(loc):
    parts = []
    for item in loc:
        if isinstance(item, int):
            parts.append(f'[{item}]')
        else:
            parts.append(f'.{item}' if parts else str(item))
    return ''.join(parts)


def _resolve(base, path):
    if path is None:
        return None
    candidate = Path(path)
    return str(candidate if candidate.is_absolute() else base / candidate)


def _resolve_paths(spec, base):
    triples = [(spec.problem, spec.splitting, spec.smoother)]
    if spec.ensemble:
        triples += [(i.problem, i.splitting, i.smoother) for i in spec.ensemble.instances]
    for problem, splitting, smoother in triples:
        if problem is not None:
            problem.path = _resolve(base, problem.path)
        splitting.S_path = _resolve(base, splitting.S_path)
        splitting.P_path = _resolve(base, splitting.P_path)
        smoother.path = _resolve(base, smoother.path)

    for problem, splitting, smoother in triples:
        for field, value in (
            ('problem.path', problem.path if problem else None),
            ('splitting.S_path', splitting.S_path),
            ('splitting.P_path', splitting.P_path),
            ('smoother.path', smoother.path),
        ):
            if value is not None and not Path(value).is_file():
                raise ConfigError(f"{field}: file {value} does not exist", field=field)
    return spec


def parse_spec(text, source='<config>', base=None):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{source}:{e.lineno}:{e.colno}: {e.msg}", line=e.lineno, column=e.colno) from e
    try:
        spec = ExperimentSpec.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        field = _field_path(first['loc'])
        messages = '; '.join(f"{_field_path(err['loc']) or '<root>'}: {err['msg']}" for err in e.errors())
        raise ConfigError(f"{source}: {messages}", field=field) from e
    return _resolve_paths(spec, Path(base) if base else Path.cwd())


def load_spec(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    return parse_spec(text, source=str(path), base=path.parent)
