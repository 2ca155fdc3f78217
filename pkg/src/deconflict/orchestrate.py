"""Three-step resolution pipeline: LB-MIQP, then LB-MIQCP, then UB-NLP."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from enum import Enum

from .errors import Infeasible
from .geom import count_conflicts, min_separation_margin, relative_position, relative_velocity
from .model import ControlDecision, ProblemInstance, heading_cone_constraints
from .relax import (EnvelopeVariant, build_lb_miqcp, build_lb_miqp, build_ub_nlp,
                    check_bound_violations)
from .solve.bnb import MipSolution, MipStatus, relative_gap, solve_mip
from .solve.nlp import solve_local_nlp

log = logging.getLogger(__name__)

MARGIN_TOL = 1e-6
BOUND_TOL = 1e-6
HEADING_TOL = 1e-8
GLOBAL_TOL = 1e-6


class Status(str, Enum):
    GLOBAL = "global"
    LOCAL = "local"
    INFEAS = "infeas"
    NOSOL = "nosol"


class StepStatus(str, Enum):
    GLOBAL = "global"
    LOCAL = "local"
    VIOL = "viol"        # incumbent found but some speed leaves [q_lo, q_hi]
    INFEAS = "infeas"    # relaxation proven infeasible
    NOSOL = "nosol"      # nothing found in the time limit


@dataclass
class StepRecord:
    step: str
    objective: float | None
    lower_bound: float | None
    time_s: float
    gap: float | None
    n_v: int | None
    status: StepStatus
    nodes: int = 0


@dataclass
class ResolutionReport:
    instance: str
    n_aircraft: int
    n_c: int
    status: Status
    objective: float | None
    lower_bound: float | None
    gap: float | None
    steps: list[StepRecord] = field(default_factory=list)
    controls: list[ControlDecision] | None = None
    z: tuple[int, ...] | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.status in (Status.GLOBAL, Status.LOCAL)

    def to_dict(self, timings: bool = True) -> dict:
        steps = []
        for s in self.steps:
            rec = asdict(s)
            rec["status"] = s.status.value
            if not timings:
                rec["time_s"] = 0.0
            steps.append(rec)
        controls = None
        if self.controls is not None:
            controls = [{"id": k, "q": c.q, "theta_rad": c.theta, "dx": c.dx, "dy": c.dy}
                        for k, c in enumerate(self.controls)]
        return {
            "instance": self.instance,
            "n_aircraft": self.n_aircraft,
            "n_c": self.n_c,
            "status": self.status.value,
            "objective": self.objective,
            "lower_bound": self.lower_bound,
            "gap": self.gap,
            "steps": steps,
            "controls": controls,
            "z": list(self.z) if self.z is not None else None,
            "notes": list(self.notes),
        }

    def to_json(self, timings: bool = True) -> str:
        return json.dumps(_finite(self.to_dict(timings)), indent=2, sort_keys=True) + "\n"


def _finite(obj):
    """JSON has no infinities; map non-finite floats to None."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


@dataclass
class VerifyResult:
    feasible: bool
    margins: dict[tuple[int, int], float]
    violated_pairs: list[tuple[int, int]]
    bound_violations: list[int]

    @property
    def min_margin(self) -> float:
        return min(self.margins.values(), default=math.inf)


def verify(inst: ProblemInstance, controls, tol: float = MARGIN_TOL) -> VerifyResult:
    """Independent feasibility check of ``controls`` from the closed-form separation."""
    controls = [c if isinstance(c, ControlDecision) else ControlDecision(*c) for c in controls]
    if len(controls) != inst.n:
        raise ValueError(f"expected {inst.n} controls, got {len(controls)}")
    b = inst.bounds
    bad_bounds = []
    for k, c in enumerate(controls):
        q, th = c.q, c.theta
        if not (b.q_lo - tol <= q <= b.q_hi + tol and b.th_lo - tol <= th <= b.th_hi + tol):
            bad_bounds.append(k)
    margins = {}
    for i, j in inst.pairs:
        si, sj = inst.states[i], inst.states[j]
        v = relative_velocity(si, sj, controls[i], controls[j])
        margins[(i, j)] = float(min_separation_margin(relative_position(si, sj), inst.d, v))
    violated = [p for p, m in margins.items() if m < -tol]
    return VerifyResult(not violated and not bad_bounds, margins, violated, bad_bounds)


def _mip_step(name: str, model, time_limit_s: float) -> tuple[StepRecord, MipSolution]:
    sol = solve_mip(model, time_limit_s)
    if sol.status is MipStatus.INFEASIBLE:
        rec = StepRecord(name, None, None, sol.wall_time, None, None, StepStatus.INFEAS, sol.nodes)
        return rec, sol
    lb = float(sol.bound) if math.isfinite(sol.bound) else None
    if sol.point is None:
        rec = StepRecord(name, None, lb, sol.wall_time, None, None, StepStatus.NOSOL, sol.nodes)
        return rec, sol
    controls = model.controls(sol.point)
    n_v = check_bound_violations(controls, model.instance.bounds)
    if n_v:
        status = StepStatus.VIOL
    elif sol.status is MipStatus.OPTIMAL:
        status = StepStatus.GLOBAL
    else:
        status = StepStatus.LOCAL
    rec = StepRecord(name, float(sol.objective), lb, sol.wall_time, float(sol.gap), n_v, status, sol.nodes)
    return rec, sol


def _heading_ok(inst: ProblemInstance, controls) -> bool:
    cone = heading_cone_constraints(inst.bounds)
    return all(cone.satisfied(c.dx, c.dy, HEADING_TOL) for c in controls)


def resolve(inst: ProblemInstance, time_limit_s: float = 300.0,
            envelope: EnvelopeVariant | str = EnvelopeVariant.VERBATIM) -> ResolutionReport:
    """Run the pipeline on ``inst``; each MIP step gets the full ``time_limit_s``."""
    report = ResolutionReport(inst.name, inst.n, count_conflicts(inst.states, inst.d),
                              Status.NOSOL, None, None, None)
    best_lb = -math.inf
    last: tuple[object, MipSolution] | None = None

    for name, build in (("LB-MIQP", build_lb_miqp), ("LB-MIQCP", build_lb_miqcp)):
        model = build(inst, envelope)
        rec, sol = _mip_step(name, model, time_limit_s)
        report.steps.append(rec)
        log.info("%s %s: %s objective=%s bound=%s", inst.name, name, rec.status.value,
                 rec.objective, rec.lower_bound)
        if rec.lower_bound is not None:
            best_lb = max(best_lb, rec.lower_bound)
        if rec.status is StepStatus.INFEAS:
            report.status = Status.INFEAS
            report.lower_bound = math.inf
            return report
        if sol.point is not None:
            last = (model, sol)
        if rec.status in (StepStatus.GLOBAL, StepStatus.LOCAL):
            controls = model.controls(sol.point)
            check = verify(inst, controls)
            if check.feasible and _heading_ok(inst, controls):
                report.status = Status(rec.status.value)
                report.controls, report.z = controls, sol.z
                report.objective = float(sol.objective)
                report.lower_bound = best_lb
                report.gap = max(relative_gap(report.objective, best_lb), 0.0)
                return report
            # numerically marginal relaxed point; let the next step handle it
            rec.status = StepStatus.VIOL
            report.notes.append(f"{name} incumbent failed independent verification")

    report.lower_bound = best_lb if math.isfinite(best_lb) else None
    if last is None:
        return report

    model, sol = last
    ub_model = build_ub_nlp(inst, sol.z)
    t0 = time.perf_counter()
    try:
        local = solve_local_nlp(ub_model, sol.point[: 2 * inst.n])
    except Infeasible:
        report.steps.append(StepRecord("UB-NLP", None, None, time.perf_counter() - t0, None, None,
                                       StepStatus.NOSOL))
        return report
    elapsed = time.perf_counter() - t0
    controls = ub_model.controls(local.point)
    gap = max(relative_gap(local.objective, best_lb), 0.0) if math.isfinite(best_lb) else None
    n_v = check_bound_violations(controls, inst.bounds)
    check = verify(inst, controls)
    ok = check.feasible and n_v == 0
    status = StepStatus.LOCAL if ok else StepStatus.NOSOL
    report.steps.append(StepRecord("UB-NLP", float(local.objective), None, elapsed, gap, n_v, status))
    if ok:
        report.status = Status.LOCAL
        report.objective = float(local.objective)
        report.controls, report.z = controls, tuple(sol.z)
        report.gap = gap
    return report
