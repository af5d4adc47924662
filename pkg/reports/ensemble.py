"""
Hierarchies named by a run config, and the default verification ensemble.
"""

import logging

import numpy as np

from engine.two_level_service import TwoLevelService
from hierarchy.hierarchy_service import HierarchyService
from hierarchy.models import SmootherKind
from kernel.exceptions import ConfigError, SmootherInvalid
from kernel.matrixmarket import read_matrix
from kernel.models import SymMatrix
from problems.models import SplittingSpec
from problems.utils import (
    a_orthogonal_splitting, poisson1d, poisson2d, problem_from_matrix, random_prolongation, random_spd,
    random_splitting, standard_splitting_1d, standard_splitting_2d, two_grid_splitting,
)

from .schema import InstanceConfig, ProblemConfig, SmootherConfig, SplittingConfig

logger = logging.getLogger(__name__)

DEFAULT_POISSON1D = (7, 15, 31)
DEFAULT_POISSON2D = (3, 4, 5)
DEFAULT_SMOOTHERS = (
    SmootherConfig(kind=SmootherKind.JACOBI),
    SmootherConfig(kind=SmootherKind.WEIGHTED_JACOBI, omega=0.7),
    SmootherConfig(kind=SmootherKind.GAUSS_SEIDEL),
)
DEFAULT_RANDOM_INSTANCES = 20
DEFAULT_DEFICIENT_INSTANCES = 10
DEFAULT_A_ORTHOGONAL_INSTANCES = 2
DEFAULT_COND_TARGET = 50.0


def build_problem(cfg):
    if cfg.kind == 'poisson1d':
        return poisson1d(cfg.m, seed=cfg.seed)
    if cfg.kind == 'poisson2d':
        return poisson2d(cfg.m, seed=cfg.seed)
    if cfg.kind == 'random_spd':
        return random_spd(cfg.n, cfg.cond_target, seed=cfg.seed)
    return problem_from_matrix(read_matrix(cfg.path, symmetric=True), seed=cfg.seed, label=f'file({cfg.path})')


def _prolongation(cfg, problem):
    if cfg.P_path:
        return read_matrix(cfg.P_path)
    kind = problem.params.get('kind')
    if cfg.n_c is None and kind == 'poisson1d':
        return standard_splitting_1d(problem.params['m']).P
    if cfg.n_c is None and kind == 'poisson2d':
        return standard_splitting_2d(problem.params['m']).P
    if cfg.n_c is None:
        raise ConfigError("splitting.n_c is required for this problem", field='splitting.n_c')
    return random_prolongation(problem.n, cfg.n_c, cfg.seed)


def build_splitting(cfg, problem):
    if cfg.kind == 'standard':
        kind = problem.params.get('kind')
        if kind == 'poisson1d':
            return standard_splitting_1d(problem.params['m'])
        if kind == 'poisson2d':
            return standard_splitting_2d(problem.params['m'])
        raise ConfigError(f"No standard splitting for {problem.label}", field='splitting.kind')
    if cfg.kind == 'random':
        return random_splitting(problem.n, cfg.n_s, cfg.n_c, cfg.seed, cfg.force_rank_deficient_SAP, A=problem.A)
    if cfg.kind == 'a_orthogonal':
        return a_orthogonal_splitting(problem, _prolongation(cfg, problem))
    if cfg.kind == 'two_grid':
        return two_grid_splitting(_prolongation(cfg, problem))
    return SplittingSpec(S=read_matrix(cfg.S_path), P=read_matrix(cfg.P_path), provenance=f'file({cfg.S_path}, {cfg.P_path})')


def build_smoother(cfg, A_s):
    matrix = read_matrix(cfg.path) if cfg.kind == SmootherKind.CUSTOM else None
    return HierarchyService.make_smoother(cfg.kind, A_s, omega=cfg.omega, matrix=matrix)


def build_hierarchy(instance):
    """Hierarchy for one configured instance; invalid smoothers and rank failures propagate"""
    problem = build_problem(instance.problem)
    split = build_splitting(instance.splitting, problem)
    A_s = SymMatrix(split.S.T @ problem.A.entries @ split.S)
    return HierarchyService.assemble(problem, split, build_smoother(instance.smoother, A_s))


def _with_fallback(instance):
    try:
        return build_hierarchy(instance)
    except SmootherInvalid as e:
        logger.warning(f"{instance.problem.kind}: {instance.smoother.kind} smoother invalid ({e}); using gauss_seidel")
        fallback = instance.model_copy(update={'smoother': SmootherConfig(kind=SmootherKind.GAUSS_SEIDEL)})
        return build_hierarchy(fallback)


def two_grid_twin(h):
    """S = I hierarchy on the same A and P with the Gauss-Seidel smoother tril(A)"""
    return TwoLevelService.two_grid_hierarchy(h.problem, h.P, np.tril(h.A.entries))


def default_instances(seed=0):
    instances = []
    for m in DEFAULT_POISSON1D:
        for smoother in DEFAULT_SMOOTHERS:
            instances.append(InstanceConfig(problem=ProblemConfig(kind='poisson1d', m=m, seed=seed), smoother=smoother))
    for m in DEFAULT_POISSON2D:
        splitting = SplittingConfig() if m % 2 else SplittingConfig(kind='random', n_s=m * m - 4, n_c=m * m // 2, seed=seed + m)
        for smoother in DEFAULT_SMOOTHERS:
            problem = ProblemConfig(kind='poisson2d', m=m, seed=seed)
            instances.append(InstanceConfig(problem=problem, splitting=splitting, smoother=smoother))

    for i in range(DEFAULT_RANDOM_INSTANCES):
        n = 6 + i % 7
        problem = ProblemConfig(kind='random_spd', n=n, cond_target=DEFAULT_COND_TARGET, seed=seed + i)
        splitting = SplittingConfig(kind='random', n_s=n - 2, n_c=n // 2 + 1, seed=seed + 1000 + i)
        instances.append(InstanceConfig(problem=problem, splitting=splitting, smoother=DEFAULT_SMOOTHERS[i % 3]))
    for i in range(DEFAULT_DEFICIENT_INSTANCES):
        n = 8 + i % 5
        problem = ProblemConfig(kind='random_spd', n=n, cond_target=DEFAULT_COND_TARGET, seed=seed + 200 + i)
        splitting = SplittingConfig(
            kind='random', n_s=n - 3, n_c=n // 2 + 2, seed=seed + 2000 + i, force_rank_deficient_SAP=True,
        )
        instances.append(InstanceConfig(problem=problem, splitting=splitting))
    for i in range(DEFAULT_A_ORTHOGONAL_INSTANCES):
        problem = ProblemConfig(kind='random_spd', n=8, cond_target=DEFAULT_COND_TARGET, seed=seed + 300 + i)
        instances.append(InstanceConfig(problem=problem, splitting=SplittingConfig(kind='a_orthogonal', n_c=3, seed=seed + i)))
    return instances


def default_ensemble(seed=0, two_grid=True):
    hierarchies = [_with_fallback(instance) for instance in default_instances(seed)]
    if two_grid:
        hierarchies += [two_grid_twin(h) for h in hierarchies if not h.is_two_grid]
    logger.info(f"Default ensemble: {len(hierarchies)} hierarchies")
    return hierarchies


def hierarchies_for(spec):
    """Every hierarchy a config names: the default ensemble, listed instances, then the top-level problem"""
    hierarchies = []
    two_grid = spec.ensemble.two_grid if spec.ensemble else False
    if spec.ensemble and spec.ensemble.default:
        hierarchies += default_ensemble(spec.seed, two_grid)
    explicit = [build_hierarchy(instance) for instance in spec.instances()]
    if two_grid:
        explicit += [two_grid_twin(h) for h in explicit if not h.is_two_grid]
    hierarchies += explicit
    if not hierarchies:
        raise ConfigError("no instances: the config names neither a problem nor an ensemble", field='ensemble')
    return hierarchies
