"""Best-first branch-and-bound over the crossing-order binaries."""

from __future__ import annotations

import heapq
import itertools
import logging
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..model import DisjunctiveConstraintPair
from ..relax import ModelKind, RelaxedModel
from .convex import SubproblemStatus, solve_convex_subproblem

log = logging.getLogger(__name__)

MIP_GAP_TOL = 1e-6
ROUND_TOL = 1e-9
TIE_TOL = 1e-9
HEURISTIC_EVERY = 25
TURN_PROBE = 1e-3


class MipStatus(str, Enum):
    OPTIMAL = "optimal"
    FEASIBLE_TIME_LIMIT = "feasible_time_limit"
    INFEASIBLE = "infeasible"
    NO_SOLUTION_TIME_LIMIT = "no_solution_time_limit"


@dataclass
class BnBNode:
    fixed: dict[int, int]
    bound: float
    depth: int
    parent_bound: float = -np.inf


@dataclass
class MipSolution:
    point: np.ndarray | None
    objective: float
    bound: float
    gap: float
    nodes: int
    wall_time: float
    status: MipStatus
    z: tuple[int, ...] | None = None
    trace: list[tuple[float, float]] = field(default_factory=list)


def relative_gap(ub: float, lb: float) -> float:
    if not np.isfinite(ub):
        return np.inf
    return (ub - lb) / max(abs(ub), 1e-10)


class _PairTable:
    """Stacked disjunction coefficients for vectorized side tests."""

    def __init__(self, model: RelaxedModel):
        disj = model.disjunctions
        self.cols = np.array([[2 * i, 2 * i + 1, 2 * j, 2 * j + 1] for i, j in (dc.pair for dc in disj)],
                             dtype=int).reshape(-1, 4)
        self.N = np.array([dc.n_coeffs for dc in disj]).reshape(-1, 4)
        self.L = np.array([dc.l_coeffs for dc in disj]).reshape(-1, 4)
        self.U = np.array([dc.u_coeffs for dc in disj]).reshape(-1, 4)
        self.scale = np.array([dc._scale for dc in disj])

    def values(self, x: np.ndarray):
        c = x[self.cols]
        return (np.einsum("ij,ij->i", self.N, c), np.einsum("ij,ij->i", self.L, c),
                np.einsum("ij,ij->i", self.U, c))

    def sides(self, x: np.ndarray, tol: float = ROUND_TOL):
        """Preferred side per pair and whether each branch holds at ``x``."""
        n, lo, up = self.values(x)
        t = tol * self.scale
        ok1 = (n <= t) & (lo <= t)
        ok0 = (-n <= t) & (-up <= t)
        side = np.where(n <= 0, 1, 0)
        return side, ok1, ok0


def _table(model: RelaxedModel) -> _PairTable:
    tab = model.__dict__.get("_pair_table")
    if tab is None:
        tab = model.__dict__["_pair_table"] = _PairTable(model)
    return tab


def rounded_side(dc: DisjunctiveConstraintPair, x: np.ndarray) -> int:
    """Branch suggested by the side of plane N on which the relative velocity lies."""
    i, j = dc.pair
    n, _, _ = dc.values(np.array([x[2 * i], x[2 * i + 1], x[2 * j], x[2 * j + 1]]))
    return 1 if n <= 0 else 0


def _round(model: RelaxedModel, x: np.ndarray, fixed: dict[int, int]):
    """Complete ``fixed`` from the relaxed point; returns (assignment, violated pairs)."""
    side, ok1, ok0 = _table(model).sides(x)
    z = {}
    violated = []
    for k in range(len(side)):
        if k in fixed:
            continue
        first_ok, other_ok = (ok1[k], ok0[k]) if side[k] == 1 else (ok0[k], ok1[k])
        if first_ok:
            z[k] = int(side[k])
        elif other_ok:
            z[k] = 1 - int(side[k])
        else:
            violated.append(k)
    return z, violated


def _fix_and_solve(model: RelaxedModel, x: np.ndarray, assign: dict[int, int], violated: list[int]):
    """Primal heuristic: fix every pair to its rounded side and solve the resulting QP."""
    side = _table(model).sides(x)[0]
    full = {**assign, **{k: int(side[k]) for k in violated}}
    zidx = model.z_index
    sol = solve_convex_subproblem(model, {int(zidx[k]): float(v) for k, v in full.items()})
    if sol.status is not SubproblemStatus.OPTIMAL:
        return None
    z = tuple(int(full[k]) for k in range(len(zidx)))
    point = sol.point.copy()
    point[zidx] = z
    return point, float(sol.objective), z


def _turn_candidates(model: RelaxedModel, fixed: dict[int, int]) -> list[dict[int, int]]:
    """Crossing orders implied by every aircraft turning slightly right, or slightly left.

    This is the usual right-of-way convention; on symmetric instances it picks
    the roundabout-like orders a relaxation midpoint cannot distinguish.
    """
    out = []
    nc = 2 * model.n_aircraft
    for eps in (-TURN_PROBE, TURN_PROBE):
        x = np.zeros(model.n_vars)
        x[0:nc:2], x[1:nc:2] = np.cos(eps), np.sin(eps)
        side = _table(model).sides(x)[0]
        cand = {k: int(side[k]) for k in range(len(side))}
        cand.update(fixed)
        if cand not in out:
            out.append(cand)
    return out


def _choose(model: RelaxedModel, x: np.ndarray, candidates: list[int]) -> int:
    """Most fractional relaxed binary; ties by conflict severity, then pair order."""
    zvals = x[model.z_index]
    sev = model.severity if model.severity is not None else np.zeros(len(zvals))

    def key(k):
        return (round(abs(zvals[k] - 0.5) / TIE_TOL), sev[k], k)

    return min(candidates, key=key)


def solve_mip(model: RelaxedModel, time_limit_s: float = 300.0, gap_tol: float = MIP_GAP_TOL,
              fixed: dict[int, int] | None = None, record_trace: bool = False) -> MipSolution:
    """Solve an LB-MIQP / LB-MIQCP model to ``gap_tol`` or until the time limit.

    Nodes are explored best-bound-first, except that the search dives
    depth-first until it finds its first incumbent.  A node's relaxed point
    closes the node whenever every unfixed pair already lies in one of its two
    branches, since the relaxed optimum is then feasible with those binaries.
    """
    if model.kind not in (ModelKind.LB_MIQP, ModelKind.LB_MIQCP):
        raise ValueError(f"solve_mip expects a lower-bound model, got {model.kind}")
    start = time.perf_counter()
    deadline = start + time_limit_s
    zidx = model.z_index
    counter = itertools.count()
    heap: list[tuple[float, int, BnBNode]] = []
    dive: list[BnBNode] = [BnBNode(dict(fixed or {}), -np.inf, 0)]
    ub, best_x, best_z = np.inf, None, None
    nodes = 0
    trace = []
    timed_out = False

    for cand in _turn_candidates(model, dict(fixed or {})):
        sol = solve_convex_subproblem(model, {int(zidx[k]): float(v) for k, v in cand.items()})
        if sol.status is SubproblemStatus.OPTIMAL and sol.objective < ub:
            z = tuple(cand[k] for k in range(len(zidx)))
            best_x, ub, best_z = sol.point.copy(), float(sol.objective), z
            best_x[zidx] = z

    def open_bound() -> float:
        bounds = [b for b, _, _ in heap] + [nd.bound for nd in dive]
        return min(bounds) if bounds else np.inf

    while dive or heap:
        if time.perf_counter() > deadline:
            timed_out = True
            break
        if dive and best_x is None:
            node = dive.pop()
        else:
            if dive:
                heap.extend((nd.bound, next(counter), nd) for nd in dive)
                heapq.heapify(heap)
                dive.clear()
            _, _, node = heapq.heappop(heap)
        if node.bound >= ub - gap_tol * max(abs(ub), 1e-10):
            continue

        nodes += 1
        sol = solve_convex_subproblem(model, {int(zidx[k]): float(v) for k, v in node.fixed.items()})
        if sol.status is SubproblemStatus.INFEASIBLE:
            continue
        bound = max(sol.objective, node.bound)
        if record_trace:
            trace.append((node.parent_bound, sol.objective))
        if bound >= ub - gap_tol * max(abs(ub), 1e-10):
            continue
        x = sol.point
        completion, violated = _round(model, x, node.fixed)
        if not violated:
            assign = {**node.fixed, **completion}
            z = tuple(int(assign[k]) for k in range(len(zidx)))
            point = x.copy()
            point[zidx] = z
            ub, best_x, best_z = bound, point, z
            log.debug("incumbent %.9g at node %d", ub, nodes)
            continue

        if nodes == 1 or nodes % HEURISTIC_EVERY == 0:
            found = _fix_and_solve(model, x, {**node.fixed, **completion}, violated)
            if found is not None and found[1] < ub - gap_tol * max(abs(found[1]), 1e-10):
                best_x, ub, best_z = found
                log.debug("heuristic incumbent %.9g at node %d", ub, nodes)
                if bound >= ub - gap_tol * max(abs(ub), 1e-10):
                    continue

        k = _choose(model, x, violated)
        first = rounded_side(model.disjunctions[k], x)
        kids = [BnBNode({**node.fixed, k: v}, bound, node.depth + 1, bound) for v in (first, 1 - first)]
        if best_x is None:
            dive.append(kids[1])
            dive.append(kids[0])
        else:
            for kid in kids:
                heapq.heappush(heap, (kid.bound, next(counter), kid))

    elapsed = time.perf_counter() - start
    lb = min(open_bound(), ub) if timed_out else ub
    if best_x is None:
        status = MipStatus.NO_SOLUTION_TIME_LIMIT if timed_out else MipStatus.INFEASIBLE
        return MipSolution(None, np.inf, lb if timed_out else np.inf, np.inf, nodes, elapsed,
                           status, None, trace)
    gap = max(relative_gap(ub, lb), 0.0)
    status = MipStatus.OPTIMAL if gap <= gap_tol else MipStatus.FEASIBLE_TIME_LIMIT
    return MipSolution(best_x, ub, lb, gap, nodes, elapsed, status, best_z, trace)
