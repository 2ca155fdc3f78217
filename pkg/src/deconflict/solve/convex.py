"""Convex QP / QCQP subproblems.

Strictly convex QPs are handed to quadprog's dual active-set method.  Second
order cones ``|(x_a, x_b)| <= r`` are enforced by tangent cutting planes, and
an infeasible verdict is certified by a phase-1 LP (HiGHS) before it is
reported.

Node relaxations of the lower-bound models are solved in projected form: the
envelope variables and every unfixed binary are eliminated exactly
(Fourier-Motzkin), leaving a nearest-point problem in the controls only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np
import quadprog
from scipy.optimize import linprog

log = logging.getLogger(__name__)

KKT_TOL = 1e-8
PHASE1_TOL = 1e-7
CONE_TOL = 1e-11
MAX_CUT_ROUNDS = 60


class SubproblemStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    ITERATION_LIMIT = "iteration_limit"


@dataclass
class SubproblemSolution:
    point: np.ndarray | None
    objective: float
    status: SubproblemStatus
    kkt_residual: float
    iterations: int = 0
    multipliers: np.ndarray | None = field(default=None, repr=False)


@dataclass
class ConeQP:
    """``min 0.5 x'Px + c'x + const`` s.t. ``Gx <= h`` and ``|(x[a], x[b])| <= r``.

    ``P`` must be positive definite.
    """

    P: np.ndarray
    c: np.ndarray
    G: np.ndarray
    h: np.ndarray
    soc: Sequence[tuple[int, int, float]] = ()
    const: float = 0.0

    @property
    def n(self) -> int:
        return len(self.c)

    def objective(self, x) -> float:
        return float(0.5 * x @ self.P @ x + self.c @ x + self.const)

    def primal_violation(self, x) -> float:
        worst = float(np.max(self.G @ x - self.h, initial=0.0))
        for a, b, r in self.soc:
            worst = max(worst, float(np.hypot(x[a], x[b]) - r))
        return max(worst, 0.0)


def kkt_residual(P, c, G, h, x, lam) -> float:
    """Scaled max of stationarity, primal infeasibility, dual sign and complementarity."""
    stat = np.max(np.abs(P @ x + c + G.T @ lam), initial=0.0) / (1.0 + np.max(np.abs(c), initial=0.0))
    slack = h - G @ x
    primal = float(np.max(-slack, initial=0.0))
    dual = float(np.max(-lam, initial=0.0))
    comp = float(np.max(np.abs(lam * slack), initial=0.0))
    return max(stat, primal, dual, comp)


def phase_one(G: np.ndarray, h: np.ndarray) -> tuple[float, np.ndarray]:
    """Smallest uniform shift ``t >= -1`` with ``Gx - t <= h`` feasible."""
    m, n = G.shape
    if m == 0:
        return -1.0, np.zeros(n)
    c = np.zeros(n + 1)
    c[n] = 1.0
    A = np.hstack([G, -np.ones((m, 1))])
    res = linprog(c, A_ub=A, b_ub=h, bounds=[(None, None)] * n + [(-1.0, None)], method="highs")
    if res.status != 0:
        return np.inf, np.zeros(n)
    return float(res.x[n]), res.x[:n]


def _quadprog(P, c, G, h):
    """Returns (x, multipliers) or None when quadprog reports inconsistency."""
    try:
        if len(h):
            x, _, _, _, lam, _ = quadprog.solve_qp(P, -c, -G.T, -h, 0)
        else:
            x, _, _, _, lam, _ = quadprog.solve_qp(P, -c)
            lam = np.zeros(0)
    except ValueError as exc:
        log.debug("quadprog: %s", exc)
        return None
    return x, lam


def solve_cone_qp(qp: ConeQP) -> SubproblemSolution:
    G, h = qp.G, qp.h
    x = lam = None
    for rounds in range(1, MAX_CUT_ROUNDS + 1):
        out = _quadprog(qp.P, qp.c, G, h)
        if out is None:
            t, x1 = phase_one(G, h)
            if t > PHASE1_TOL:
                return SubproblemSolution(None, np.inf, SubproblemStatus.INFEASIBLE, np.inf, rounds)
            log.warning("quadprog rejected a feasible problem (phase-1 shift %.3g)", t)
            return SubproblemSolution(x1, qp.objective(x1), SubproblemStatus.ITERATION_LIMIT, np.inf, rounds)
        x, lam = out
        cuts, rhs = [], []
        for a, b, r in qp.soc:
            norm = float(np.hypot(x[a], x[b]))
            if norm > r + CONE_TOL:
                row = np.zeros(qp.n)
                row[a], row[b] = x[a] / norm, x[b] / norm
                cuts.append(row)
                rhs.append(r)
        if not cuts:
            kkt = kkt_residual(qp.P, qp.c, G, h, x, lam)
            status = SubproblemStatus.OPTIMAL if kkt <= KKT_TOL else SubproblemStatus.ITERATION_LIMIT
            return SubproblemSolution(x, qp.objective(x), status, kkt, rounds, lam[: len(qp.h)])
        G = np.vstack([G, cuts])
        h = np.concatenate([h, rhs])
    kkt = kkt_residual(qp.P, qp.c, G, h, x, lam)
    return SubproblemSolution(x, qp.objective(x), SubproblemStatus.ITERATION_LIMIT, kkt, MAX_CUT_ROUNDS)


def _drop_empty(G: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, np.ndarray] | None:
    empty = ~np.any(G != 0, axis=1)
    if np.any(h[empty] < -1e-12):
        return None
    return G[~empty], h[~empty]


class _RowCache:
    """Per-model blocks of projected rows, assembled per node by indexing."""

    def __init__(self, model):
        n = model.n_aircraft
        nc = 2 * n
        base_G = [model.G[model.rows(g), :nc] for g in ("box", "heading")]
        base_h = [model.h[model.rows(g)] for g in ("box", "heading")]
        env = model.envelope
        (s1, i1), (s2, i2) = env.secant_x, env.secant_y
        for i in range(n):
            # exists tx, ty >= 0 with tx <= s1 dx + i1, ty <= s2 dy + i2, tx + ty >= q_lo^2
            blk = np.zeros((3, nc))
            blk[0, 2 * i] = -s1
            blk[1, 2 * i + 1] = -s2
            blk[2, 2 * i], blk[2, 2 * i + 1] = -s1, -s2
            base_G.append(blk)
            base_h.append(np.array([i1, i2, i1 + i2 - env.q_lo_sq]))
        self.base_G = np.vstack(base_G)
        self.base_h = np.concatenate(base_h)
        m = len(model.disjunctions)
        # [pair, branch] -> rows; branch 0/1 fixed, 2 relaxed (three rows)
        self.fixed_G = np.zeros((m, 2, 2, nc))
        self.free_G = np.zeros((m, 3, nc))
        self.free_h = np.zeros((m, 3))
        for k, dc in enumerate(model.disjunctions):
            i, j = dc.pair
            cols = [2 * i, 2 * i + 1, 2 * j, 2 * j + 1]
            for z, rows in ((1, (dc.n_coeffs, dc.l_coeffs)), (0, (-dc.n_coeffs, -dc.u_coeffs))):
                for t, coeffs in enumerate(rows):
                    self.fixed_G[k, z, t, cols] = coeffs / (np.linalg.norm(coeffs) or 1.0)
            nn, ll, uu = dc.n_coeffs / dc.big_m_n, dc.l_coeffs / dc.big_m_l, dc.u_coeffs / dc.big_m_u
            for t, coeffs in enumerate((ll - nn, nn - uu, ll - uu)):
                scale = np.linalg.norm(coeffs) or 1.0
                self.free_G[k, t, cols] = coeffs / scale
                self.free_h[k, t] = 1.0 / scale

    def rows(self, fixed_z: Mapping[int, int]) -> tuple[np.ndarray, np.ndarray]:
        m = len(self.free_G)
        fk = np.array(sorted(fixed_z), dtype=int)
        fv = np.array([fixed_z[k] for k in fk], dtype=int)
        free = np.setdiff1d(np.arange(m), fk)
        nc = self.base_G.shape[1]
        G = np.vstack([self.base_G,
                       self.fixed_G[fk, fv].reshape(-1, nc),
                       self.free_G[free].reshape(-1, nc)])
        h = np.concatenate([self.base_h, np.zeros(2 * len(fk)), self.free_h[free].ravel()])
        return G, h


def relaxation_rows(model, fixed_z: Mapping[int, int] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Linear rows of ``model`` projected onto the control variables.

    ``fixed_z`` maps pair index to a binary value; the remaining binaries of a
    lower-bound model are relaxed to [0, 1] and projected out.
    """
    from ..relax import ModelKind

    nc = 2 * model.n_aircraft
    if model.kind is ModelKind.UB_NLP:
        sl = [model.rows(g) for g in ("box", "heading", "disjunction")]
        return np.vstack([model.G[s, :nc] for s in sl]), np.concatenate([model.h[s] for s in sl])
    cache = model.__dict__.get("_row_cache")
    if cache is None:
        cache = model.__dict__["_row_cache"] = _RowCache(model)
    return cache.rows(dict(fixed_z or {}))


def relaxed_binaries(model, x: np.ndarray, fixed_z: Mapping[int, int]) -> np.ndarray:
    """Midpoint of each unfixed binary's feasible interval at controls ``x``."""
    disj = model.disjunctions
    idx = np.array([[2 * i, 2 * i + 1, 2 * j, 2 * j + 1] for i, j in (dc.pair for dc in disj)],
                   dtype=int).reshape(-1, 4)
    c = x[idx]
    n = np.einsum("ij,ij->i", np.array([dc.n_coeffs for dc in disj]).reshape(-1, 4), c)
    lo = np.einsum("ij,ij->i", np.array([dc.l_coeffs for dc in disj]).reshape(-1, 4), c)
    up = np.einsum("ij,ij->i", np.array([dc.u_coeffs for dc in disj]).reshape(-1, 4), c)
    mn = np.array([dc.big_m_n for dc in disj])
    ml = np.array([dc.big_m_l for dc in disj])
    mu = np.array([dc.big_m_u for dc in disj])
    low = np.maximum.reduce([np.zeros_like(n), -n / mn, -up / mu])
    high = np.minimum.reduce([np.ones_like(n), 1.0 - n / mn, 1.0 - lo / ml])
    z = 0.5 * (low + high)
    for k, v in fixed_z.items():
        z[k] = v
    return z


def solve_convex_subproblem(model, fixed: Mapping[int, float] | None = None) -> SubproblemSolution:
    """Solve the convex relaxation of ``model`` with some binaries held fixed.

    ``fixed`` maps *variable* indices (entries of ``model.z_index``) to 0/1.
    Unfixed binaries are relaxed to [0, 1].  The reverse-convex ring of an
    UB-NLP model is ignored.  The returned point uses the full variable layout
    of ``model``.
    """
    from ..relax import ModelKind

    fixed = dict(fixed or {})
    pos = {int(v): k for k, v in enumerate(model.z_index)}
    bad = set(fixed) - set(pos)
    if bad:
        raise ValueError(f"only binaries can be fixed, got indices {sorted(bad)}")
    fixed_z = {pos[v]: int(round(val)) for v, val in fixed.items()}

    nc = 2 * model.n_aircraft
    G, h = relaxation_rows(model, fixed_z)
    cleaned = _drop_empty(G, h)
    if cleaned is None:
        return SubproblemSolution(None, np.inf, SubproblemStatus.INFEASIBLE, np.inf)
    G, h = cleaned
    qp = ConeQP(np.diag(model.P_diag[:nc]), model.c[:nc], G, h, list(model.soc), model.const)
    sol = solve_cone_qp(qp)
    if sol.point is None:
        return sol
    x = sol.point
    full = np.zeros(model.n_vars)
    full[:nc] = x
    if model.kind is not ModelKind.UB_NLP:
        (s1, i1), (s2, i2) = model.envelope.secant_x, model.envelope.secant_y
        full[nc:2 * nc:2] = np.maximum(s1 * x[0::2] + i1, 0.0)
        full[nc + 1:2 * nc:2] = np.maximum(s2 * x[1::2] + i2, 0.0)
        full[model.z_index] = relaxed_binaries(model, x, fixed_z)
    sol.point = full
    sol.objective = model.objective(full)
    return sol
