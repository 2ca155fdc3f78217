"""Convex relaxations (LB-MIQP, LB-MIQCP) and the fixed-order problem (UB-NLP)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .model import (
    ControlBounds,
    ControlDecision,
    DisjunctiveConstraintPair,
    ProblemInstance,
    box_bounds,
    build_disjunctions,
    heading_cone_constraints,
)

BOUND_EPS = 1e-6


class ModelKind(str, Enum):
    LB_MIQP = "LB-MIQP"
    LB_MIQCP = "LB-MIQCP"
    UB_NLP = "UB-NLP"


class EnvelopeVariant(str, Enum):
    VERBATIM = "verbatim"
    QBAR = "qbar"


@dataclass(frozen=True)
class HullEnvelope:
    """Secant over-estimators of ``dx^2`` and ``dy^2`` on the control box.

    ``tx <= sx * dx + ix``, ``ty <= sy * dy + iy``, ``q_lo^2 <= tx + ty``.
    """

    secant_x: tuple[float, float]
    secant_y: tuple[float, float]
    q_lo_sq: float
    x_range: tuple[float, float]
    y_range: tuple[float, float]


def hull_envelope(bounds: ControlBounds, variant: EnvelopeVariant | str = EnvelopeVariant.VERBATIM) -> HullEnvelope:
    variant = EnvelopeVariant(variant)
    a = bounds.q_lo * bounds.cos_max
    # the printed secant joins a and 1; the qbar variant joins a and q_hi
    b = 1.0 if variant is EnvelopeVariant.VERBATIM else bounds.q_hi
    sl, sh = math.sin(bounds.th_lo), math.sin(bounds.th_hi)
    return HullEnvelope(
        secant_x=(a + b, -a * b),
        secant_y=(bounds.q_hi * (sl + sh), -bounds.q_hi ** 2 * sl * sh),
        q_lo_sq=bounds.q_lo ** 2,
        x_range=(a, b),
        y_range=(bounds.q_hi * sl, bounds.q_hi * sh),
    )


@dataclass
class RelaxedModel:
    """A quadratic program over the stacked variable vector.

    Layout: ``[dx_0, dy_0, ..., dx_{n-1}, dy_{n-1}]`` then, for the lower-bound
    models, ``[tx_0, ty_0, ...]`` and one binary per pair.  Constraints are
    ``G x <= h`` plus second-order cones ``|(x[a], x[b])| <= r`` and, for
    UB-NLP only, the reverse-convex ring ``|(x[a], x[b])| >= ring_lo``.
    """

    kind: ModelKind
    instance: ProblemInstance
    n_vars: int
    G: np.ndarray
    h: np.ndarray
    row_groups: list[tuple[str, int, int]]
    P_diag: np.ndarray
    c: np.ndarray
    const: float
    z_index: np.ndarray
    disjunctions: list[DisjunctiveConstraintPair]
    soc: list[tuple[int, int, float]] = field(default_factory=list)
    ring_lo: float | None = None
    z_fixed: tuple[int, ...] | None = None
    envelope: HullEnvelope | None = None
    severity: np.ndarray | None = None

    @property
    def n_aircraft(self) -> int:
        return self.instance.n

    def control_slice(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x[: 2 * self.n_aircraft]).reshape(-1, 2)

    def controls(self, x: np.ndarray) -> list[ControlDecision]:
        return [ControlDecision(float(a), float(b)) for a, b in self.control_slice(x)]

    def objective(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ (self.P_diag * x) + self.c @ x + self.const)

    def max_violation(self, x: np.ndarray, z: Sequence[float] | None = None) -> float:
        """Largest violation of any constraint, with ``z`` optionally overriding the binaries."""
        x = np.array(x, dtype=float)
        if z is not None and len(self.z_index):
            x[self.z_index] = z
        worst = float(np.max(self.G @ x - self.h, initial=0.0))
        for a, b, r in self.soc:
            worst = max(worst, math.hypot(x[a], x[b]) - r)
        if self.ring_lo is not None:
            q = np.hypot(*self.control_slice(x).T)
            worst = max(worst, float(np.max(self.ring_lo - q, initial=0.0)))
        return max(worst, 0.0)

    def rows(self, group: str) -> slice:
        for name, start, stop in self.row_groups:
            if name == group:
                return slice(start, stop)
        raise KeyError(group)


class _RowBuilder:
    def __init__(self, n_vars: int):
        self.n_vars = n_vars
        self.rows: list[np.ndarray] = []
        self.rhs: list[float] = []
        self.groups: list[tuple[str, int, int]] = []
        self._open: tuple[str, int] | None = None

    def begin(self, name: str):
        self._open = (name, len(self.rows))

    def end(self):
        name, start = self._open
        self.groups.append((name, start, len(self.rows)))
        self._open = None

    def add(self, entries: dict[int, float], rhs: float, normalize_over: Sequence[int] | None = None):
        row = np.zeros(self.n_vars)
        for k, v in entries.items():
            row[k] += v
        idx = list(entries) if normalize_over is None else list(normalize_over)
        scale = float(np.linalg.norm(row[idx]))
        if scale > 0:
            row /= scale
            rhs /= scale
        self.rows.append(row)
        self.rhs.append(rhs)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.rows:
            return np.zeros((0, self.n_vars)), np.zeros(0)
        return np.vstack(self.rows), np.asarray(self.rhs)


def _objective(n: int, n_vars: int) -> tuple[np.ndarray, np.ndarray, float]:
    # sum dy^2 + (1 - dx)^2 = 0.5 x'Px + c'x + n
    P = np.zeros(n_vars)
    P[: 2 * n] = 2.0
    c = np.zeros(n_vars)
    c[0 : 2 * n : 2] = -2.0
    return P, c, float(n)


def _control_rows(rb: _RowBuilder, inst: ProblemInstance):
    dx_lo, dx_hi, dy_lo, dy_hi = box_bounds(inst.bounds)
    cone = heading_cone_constraints(inst.bounds)
    rb.begin("box")
    for i in range(inst.n):
        ix, iy = 2 * i, 2 * i + 1
        rb.add({ix: -1.0}, -dx_lo)
        rb.add({ix: 1.0}, dx_hi)
        rb.add({iy: -1.0}, -dy_lo)
        rb.add({iy: 1.0}, dy_hi)
    rb.end()
    rb.begin("heading")
    for i in range(inst.n):
        for (a, b), rhs in zip(cone.A, cone.b):
            rb.add({2 * i: a, 2 * i + 1: b}, rhs)
    rb.end()


def _conflict_severity(inst: ProblemInstance) -> np.ndarray:
    """Unit-scaled separation discriminant of each pair under no manoeuvre."""
    from .geom import g_value

    out = np.zeros(len(inst.pairs))
    for k, ((i, j), g) in enumerate(zip(inst.pairs, inst.geometries)):
        vi, vj = inst.states[i].velocity_hat, inst.states[j].velocity_hat
        v = (vi.x - vj.x, vi.y - vj.y)
        vv = v[0] ** 2 + v[1] ** 2
        diverging = g.p_hat.x * v[0] + g.p_hat.y * v[1] >= 0
        out[k] = 0.0 if diverging or vv == 0 else g_value(g.p_hat, inst.d, v) / (vv * g.p_hat.norm() ** 2)
    return out


def _build_lower(inst: ProblemInstance, kind: ModelKind, envelope: EnvelopeVariant | str) -> RelaxedModel:
    n, m = inst.n, len(inst.pairs)
    n_vars = 4 * n + m
    z0 = 4 * n
    rb = _RowBuilder(n_vars)
    _control_rows(rb, inst)

    env = hull_envelope(inst.bounds, envelope)
    rb.begin("envelope")
    for i in range(n):
        ix, iy, tx, ty = 2 * i, 2 * i + 1, 2 * n + 2 * i, 2 * n + 2 * i + 1
        rb.add({tx: -1.0, ty: -1.0}, -env.q_lo_sq)
        rb.add({tx: 1.0, ix: -env.secant_x[0]}, env.secant_x[1])
        rb.add({ty: 1.0, iy: -env.secant_y[0]}, env.secant_y[1])
        rb.add({tx: -1.0}, 0.0)
        rb.add({ty: -1.0}, 0.0)
    rb.end()

    disj = build_disjunctions(inst)
    rb.begin("disjunction")
    for k, dc in enumerate(disj):
        i, j = dc.pair
        cols = [2 * i, 2 * i + 1, 2 * j, 2 * j + 1]
        for coeffs, zc, rhs in dc.rows():
            entries = dict(zip(cols, coeffs))
            entries[z0 + k] = zc
            rb.add(entries, rhs, normalize_over=cols)
    rb.end()
    rb.begin("binary")
    for k in range(m):
        rb.add({z0 + k: -1.0}, 0.0)
        rb.add({z0 + k: 1.0}, 1.0)
    rb.end()

    G, h = rb.arrays()
    P, c, const = _objective(n, n_vars)
    soc = []
    if kind is ModelKind.LB_MIQCP:
        soc = [(2 * i, 2 * i + 1, inst.bounds.q_hi) for i in range(n)]
    return RelaxedModel(
        kind=kind, instance=inst, n_vars=n_vars, G=G, h=h, row_groups=rb.groups,
        P_diag=P, c=c, const=const, z_index=np.arange(z0, z0 + m), disjunctions=disj,
        soc=soc, envelope=env, severity=_conflict_severity(inst),
    )


def build_lb_miqp(inst: ProblemInstance, envelope: EnvelopeVariant | str = EnvelopeVariant.VERBATIM) -> RelaxedModel:
    """Speed ring dropped; heading cone, control box, envelope and disjunctions kept."""
    return _build_lower(inst, ModelKind.LB_MIQP, envelope)


def build_lb_miqcp(inst: ProblemInstance, envelope: EnvelopeVariant | str = EnvelopeVariant.VERBATIM) -> RelaxedModel:
    """LB-MIQP plus the convex outer ring ``dx^2 + dy^2 <= q_hi^2``."""
    return _build_lower(inst, ModelKind.LB_MIQCP, envelope)


def build_ub_nlp(inst: ProblemInstance, z_fixed: Sequence[int]) -> RelaxedModel:
    """Full model with every crossing order fixed; continuous and nonconvex."""
    n, m = inst.n, len(inst.pairs)
    z_fixed = tuple(int(z) for z in z_fixed)
    if len(z_fixed) != m or any(z not in (0, 1) for z in z_fixed):
        raise ValueError(f"z_fixed must hold {m} binary values")
    n_vars = 2 * n
    rb = _RowBuilder(n_vars)
    _control_rows(rb, inst)
    disj = build_disjunctions(inst)
    rb.begin("disjunction")
    for dc, z in zip(disj, z_fixed):
        i, j = dc.pair
        cols = [2 * i, 2 * i + 1, 2 * j, 2 * j + 1]
        if z == 1:
            rb.add(dict(zip(cols, dc.n_coeffs)), 0.0)
            rb.add(dict(zip(cols, dc.l_coeffs)), 0.0)
        else:
            rb.add(dict(zip(cols, -dc.n_coeffs)), 0.0)
            rb.add(dict(zip(cols, -dc.u_coeffs)), 0.0)
    rb.end()
    G, h = rb.arrays()
    P, c, const = _objective(n, n_vars)
    return RelaxedModel(
        kind=ModelKind.UB_NLP, instance=inst, n_vars=n_vars, G=G, h=h, row_groups=rb.groups,
        P_diag=P, c=c, const=const, z_index=np.zeros(0, dtype=int), disjunctions=disj,
        soc=[(2 * i, 2 * i + 1, inst.bounds.q_hi) for i in range(n)],
        ring_lo=inst.bounds.q_lo, z_fixed=z_fixed, severity=_conflict_severity(inst),
    )


def check_bound_violations(controls: Sequence[ControlDecision], bounds: ControlBounds,
                           eps: float = BOUND_EPS) -> int:
    """Number of aircraft whose speed ratio leaves ``[q_lo - eps, q_hi + eps]``."""
    return sum(1 for c in controls if not bounds.q_lo - eps <= c.q <= bounds.q_hi + eps)
