import logging

import numpy as np

from kernel.exceptions import InvalidSize

from .models import AccuracyCert, InnerTrace
from .streams import RandomStream

logger = logging.getLogger(__name__)

# Residuals below this fraction of ||r_c||_{A_c^-1} count as solved
RESIDUAL_GUARD_RTOL = 1e-14


def a_norm(v, A):
    return float(np.sqrt(max(float(v @ (A @ v)), 0.0)))


def a_inv_norm(r, h):
    """||r||_{A_c^-1} through the cached Cholesky factor"""
    return float(np.sqrt(max(float(r @ h.solve_A_c(r)), 0.0)))


def run_inner(h, r_c, solvers, stream=None):
    """
    Run e_c^(k) = e_c^(k-1) + B_k[r_c - A_c e_c^(k-1)] from e_c^(0) = 0.

    Step k draws its randomness from stream.child(k). The exact A_c^{-1} is
    used only to measure accuracy, never to build the iterates.
    """
    if len(solvers) < 1:
        raise InvalidSize("The inner chain needs at least one solver")
    stream = stream or RandomStream(0)
    A_c = h.A_c.entries
    r_c = np.asarray(r_c, dtype=np.float64)

    target = h.solve_A_c(r_c)
    rc_norm = float(np.sqrt(max(float(r_c @ target), 0.0)))

    e = np.zeros_like(r_c)
    residuals = [r_c.copy()]
    iterates = [e.copy()]
    residual_norms = [rc_norm]
    error_norms = [rc_norm]
    measured_eps = []
    certs = []
    steps_taken = 0
    short_circuited = False

    for k, solver in enumerate(solvers, start=1):
        certs.append(solver.epsilon_apriori(h.A_c))
        r_prev = residuals[-1]
        r_prev_norm = residual_norms[-1]

        if rc_norm == 0.0 or r_prev_norm <= RESIDUAL_GUARD_RTOL * rc_norm:
            short_circuited = True
            measured_eps.append(0.0)
            residuals.append(r_prev.copy())
            iterates.append(e.copy())
            residual_norms.append(r_prev_norm)
            error_norms.append(error_norms[-1])
            continue

        d = solver.apply(h.A_c, r_prev, stream.child(k).rng())
        step_error = h.solve_A_c(r_prev) - d
        measured_eps.append(a_norm(step_error, A_c) / r_prev_norm)

        e = e + d
        r_k = r_c - A_c @ e
        residuals.append(r_k)
        iterates.append(e.copy())
        residual_norms.append(a_inv_norm(r_k, h))
        error_norms.append(a_norm(target - e, A_c))
        steps_taken += 1
        logger.debug(f"inner step {k} ({solver.label}): eps={measured_eps[-1]:.4e}")

    return e, InnerTrace(
        residuals=residuals,
        iterates=iterates,
        measured_eps=measured_eps,
        residual_norms=residual_norms,
        error_norms=error_norms,
        certs=certs,
        rc_norm=rc_norm,
        e_norm=a_norm(e, A_c),
        rTe=float(r_c @ e),
        steps_taken=steps_taken,
        short_circuited=short_circuited,
        labels=[s.label for s in solvers],
    )


def exact_inner_trace(h, r_c, e_c, label='exact'):
    """Trace of a single coarse correction e_c computed outside the solver chain"""
    A_c = h.A_c.entries
    r_c = np.asarray(r_c, dtype=np.float64)
    target = h.solve_A_c(r_c)
    rc_norm = float(np.sqrt(max(float(r_c @ target), 0.0)))
    error = a_norm(target - e_c, A_c)
    r_1 = r_c - A_c @ e_c
    return InnerTrace(
        residuals=[r_c.copy(), r_1],
        iterates=[np.zeros_like(r_c), np.array(e_c, dtype=np.float64)],
        measured_eps=[error / rc_norm if rc_norm > 0.0 else 0.0],
        residual_norms=[rc_norm, a_inv_norm(r_1, h)],
        error_norms=[rc_norm, error],
        certs=[AccuracyCert.of(0.0, label=label)],
        rc_norm=rc_norm,
        e_norm=a_norm(e_c, A_c),
        rTe=float(r_c @ e_c),
        steps_taken=1,
        short_circuited=rc_norm == 0.0,
        labels=[label],
    )
