"""Local solver for the fixed-order nonconvex problem (UB-NLP).

The only nonconvex constraint is the inner speed ring ``|delta_i| >= q_lo``.
It is handled by an augmented-Lagrangian outer loop on elastic slacks, where
each inner problem replaces ``|delta_i|^2`` by its tangent at the current
iterate.  Because ``|delta|^2`` is convex, the tangent under-estimates it, so
any point satisfying the linearized ring satisfies the true ring: once the
slacks vanish the iterates stay feasible and the objective decreases
monotonically (a convex-concave procedure).
"""

from __future__ import annotations

import logging

import numpy as np

from ..errors import Infeasible
from ..relax import ModelKind, RelaxedModel
from .convex import ConeQP, SubproblemSolution, SubproblemStatus, relaxation_rows, solve_cone_qp

log = logging.getLogger(__name__)

VIOLATION_TOL = 1e-9
RHO0 = 10.0
RHO_GROWTH = 10.0
MAX_OUTER = 6
MAX_INNER = 200
RESTARTS = 3
RESTART_SEED = 20_170_101
STEP_TOL = 1e-12


def _linearized_ring(x: np.ndarray, q_lo: float) -> tuple[np.ndarray, np.ndarray]:
    """Rows ``-2 delta_k . delta <= -q_lo^2 - |delta_k|^2`` per aircraft."""
    d = x.reshape(-1, 2)
    n = len(d)
    A = np.zeros((n, 2 * n))
    for i, (a, b) in enumerate(d):
        A[i, 2 * i], A[i, 2 * i + 1] = -2 * a, -2 * b
    rhs = -q_lo ** 2 - np.sum(d * d, axis=1)
    scale = np.linalg.norm(A, axis=1)
    scale[scale == 0] = 1.0
    return A / scale[:, None], rhs / scale


def _ccp_step(model: RelaxedModel, G0, h0, x, lam=None, rho=None):
    """One convexified solve; with ``rho`` set the ring rows get elastic slacks."""
    n = model.n_aircraft
    nc = 2 * n
    A, b = _linearized_ring(x, model.ring_lo)
    P = np.diag(model.P_diag[:nc])
    c = model.c[:nc]
    if rho is None:
        G = np.vstack([G0, A])
        h = np.concatenate([h0, b])
        qp = ConeQP(P, c, G, h, list(model.soc), model.const)
        sol = solve_cone_qp(qp)
        return sol.point, None, sol
    scale = 2 * np.hypot(*x.reshape(-1, 2).T)
    scale[scale == 0] = 1.0
    Pz = np.zeros((nc + n, nc + n))
    Pz[:nc, :nc] = P
    Pz[nc:, nc:] = rho * np.eye(n)
    cz = np.concatenate([c, lam])
    G = np.zeros((len(h0) + 2 * n, nc + n))
    G[: len(h0), :nc] = G0
    G[len(h0): len(h0) + n, :nc] = A
    G[len(h0): len(h0) + n, nc:] = -np.eye(n) / scale[:, None]
    G[len(h0) + n:, nc:] = -np.eye(n)
    h = np.concatenate([h0, b, np.zeros(n)])
    qp = ConeQP(Pz, cz, G, h, list(model.soc), model.const)
    sol = solve_cone_qp(qp)
    if sol.point is None:
        return None, None, sol
    return sol.point[:nc], sol.point[nc:], sol


def _local_from(model: RelaxedModel, G0, h0, x0: np.ndarray):
    x = np.array(x0, dtype=float)
    n = model.n_aircraft
    lam = np.zeros(n)
    rho = RHO0
    feasible = model.max_violation(x) <= VIOLATION_TOL
    for _ in range(0 if feasible else MAX_OUTER):
        s = None
        for _ in range(MAX_INNER):
            x_new, s, sol = _ccp_step(model, G0, h0, x, lam, rho)
            if x_new is None:
                return None
            step = float(np.max(np.abs(x_new - x)))
            x = x_new
            if step <= STEP_TOL:
                break
        if model.max_violation(x) <= VIOLATION_TOL:
            feasible = True
            break
        lam = np.maximum(lam + rho * s, 0.0)
        rho *= RHO_GROWTH
    if not feasible:
        return None
    best = x
    for _ in range(MAX_INNER):
        x_new, _, sol = _ccp_step(model, G0, h0, best)
        if x_new is None:
            break
        if model.objective(x_new) > model.objective(best) or model.max_violation(x_new) > VIOLATION_TOL:
            break
        step = float(np.max(np.abs(x_new - best)))
        best = x_new
        if step <= STEP_TOL:
            break
    return best


def solve_local_nlp(model: RelaxedModel, start: np.ndarray) -> SubproblemSolution:
    """Feasible local solution of UB-NLP from ``start``, or :class:`Infeasible`.

    The given start is tried first, then ``RESTARTS`` deterministic random
    starts inside the control box.
    """
    if model.kind is not ModelKind.UB_NLP:
        raise ValueError("solve_local_nlp expects an UB-NLP model")
    G0, h0 = relaxation_rows(model)
    nc = 2 * model.n_aircraft
    rng = np.random.default_rng(RESTART_SEED)
    starts = [np.asarray(start, dtype=float)[:nc]]
    for _ in range(RESTARTS):
        q = rng.uniform(model.instance.bounds.q_lo, model.instance.bounds.q_hi, model.n_aircraft)
        th = rng.uniform(model.instance.bounds.th_lo, model.instance.bounds.th_hi, model.n_aircraft)
        starts.append(np.column_stack([q * np.cos(th), q * np.sin(th)]).ravel())
    for k, x0 in enumerate(starts):
        x = _local_from(model, G0, h0, x0)
        if x is not None:
            viol = model.max_violation(x)
            log.debug("local solve from start %d: objective %.9g, violation %.2g", k, model.objective(x), viol)
            return SubproblemSolution(x, model.objective(x), SubproblemStatus.OPTIMAL, viol)
    raise Infeasible("no feasible point found for the fixed crossing orders")
