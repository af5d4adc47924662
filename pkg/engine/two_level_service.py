import logging

import numpy as np

from coarse.inner_service import exact_inner_trace, run_inner
from coarse.models import AccuracyCert
from coarse.streams import RandomStream
from hierarchy.hierarchy_service import HierarchyService
from problems.utils import two_grid_splitting

from .models import RunTrace, SweepRecord

logger = logging.getLogger(__name__)


def _energy(h, v):
    return float(np.sqrt(max(float(v @ (h.A.entries @ v)), 0.0)))


def _reference_solution(h, f, u_star):
    if u_star is not None:
        return np.asarray(u_star, dtype=np.float64)
    if np.array_equal(f, h.problem.f):
        return h.problem.u_star
    return h.solve_A(f)


class TwoLevelService:
    @staticmethod
    def presmooth(h, u, f):
        return u + h.S @ h.solve_M_s(h.S.T @ (f - h.A.entries @ u))

    @staticmethod
    def postsmooth(h, u, f):
        return u + h.S @ h.solve_M_s_T(h.S.T @ (f - h.A.entries @ u))

    @staticmethod
    def sweep(h, u0, f, solvers, postsmoothing, stream, u_star):
        """One pass of presmoothing, inexact coarse correction and optional postsmoothing"""
        u1 = TwoLevelService.presmooth(h, u0, f)
        r_c = h.P.T @ (f - h.A.entries @ u1)
        e_c, inner = run_inner(h, r_c, solvers, stream)
        u2 = u1 + h.P @ e_c
        u_out = TwoLevelService.postsmooth(h, u2, f) if postsmoothing else u2

        record = SweepRecord(
            err0=_energy(h, u_star - u0),
            err1=_energy(h, u_star - u1),
            err2=_energy(h, u_star - u2),
            err_final=_energy(h, u_star - u_out),
            inner=inner,
        )
        return u_out, record

    @staticmethod
    def exact_two_level(h, f, u0, u_star=None, outer_sweeps=1):
        """Presmoothing, restriction, exact coarse solve, prolongation, postsmoothing"""
        f = np.asarray(f, dtype=np.float64)
        A = h.A.entries
        u = np.array(u0, dtype=np.float64)
        u_star = _reference_solution(h, f, u_star)

        trace = RunTrace(label=h.problem.label, postsmoothing=True, cert=AccuracyCert.of(0.0, label='exact'))
        for t in range(outer_sweeps):
            u_prev = u
            u1 = u_prev + h.S @ h.solve_M_s(h.S.T @ (f - A @ u_prev))
            r_c = h.P.T @ (f - A @ u1)
            e_c = h.solve_A_c(r_c)
            u2 = u1 + h.P @ e_c
            u = u2 + h.S @ h.solve_M_s_T(h.S.T @ (f - A @ u2))
            trace.sweeps.append(SweepRecord(
                err0=_energy(h, u_star - u_prev),
                err1=_energy(h, u_star - u1),
                err2=_energy(h, u_star - u2),
                err_final=_energy(h, u_star - u),
                inner=exact_inner_trace(h, r_c, e_c),
            ))
            logger.debug(f"{h.problem.label} exact sweep {t}: contraction={trace.sweeps[-1].contraction:.6e}")
        return u, trace

    @staticmethod
    def inexact_two_level(h, f, u0, cfg, u_star=None, stream=None):
        f = np.asarray(f, dtype=np.float64)
        u = np.array(u0, dtype=np.float64)
        u_star = _reference_solution(h, f, u_star)
        stream = stream or RandomStream(cfg.seed)
        solvers = cfg.build_chain(h)

        trace = RunTrace(
            label=h.problem.label,
            postsmoothing=cfg.postsmoothing,
            cert=AccuracyCert.chain([s.epsilon_apriori(h.A_c) for s in solvers]),
        )
        for t in range(cfg.outer_sweeps):
            u, record = TwoLevelService.sweep(h, u, f, solvers, cfg.postsmoothing, stream.child(t), u_star)
            trace.sweeps.append(record)
            logger.debug(f"{h.problem.label} sweep {t}: contraction={record.contraction:.6e}, eps={record.inner.product_eps:.3e}")
        return u, trace

    @staticmethod
    def two_grid_hierarchy(problem, P, M):
        """Hierarchy with S = I and M_s = M"""
        split = two_grid_splitting(P)
        smoother = HierarchyService.make_smoother('custom', problem.A, matrix=M)
        return HierarchyService.assemble(problem, split, smoother)

    @staticmethod
    def inexact_two_grid(problem, P, M, f, u0, cfg, u_star=None, stream=None, h=None):
        h = h or TwoLevelService.two_grid_hierarchy(problem, P, M)
        return TwoLevelService.inexact_two_level(h, f, u0, cfg, u_star=u_star, stream=stream)
