"""Complex-number control model: variables, bounds, objective and disjunctions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .geom import AircraftState, PairGeometry, relative_position, tangent_halfplanes

BIG_M_SAFETY = 1.01


@dataclass(frozen=True)
class ControlDecision:
    """Complex control ``q (cos theta + i sin theta)`` in rectangular form."""

    dx: float
    dy: float

    @classmethod
    def from_polar(cls, q: float, theta: float) -> "ControlDecision":
        return cls(q * math.cos(theta), q * math.sin(theta))

    @classmethod
    def identity(cls) -> "ControlDecision":
        return cls(1.0, 0.0)

    @property
    def q(self) -> float:
        return math.hypot(self.dx, self.dy)

    @property
    def theta(self) -> float:
        return math.atan2(self.dy, self.dx)


@dataclass(frozen=True)
class ControlBounds:
    q_lo: float = 0.94
    q_hi: float = 1.03
    th_lo: float = -math.pi / 6
    th_hi: float = math.pi / 6

    def __post_init__(self):
        if not 0 < self.q_lo <= self.q_hi:
            raise ValueError(f"need 0 < q_lo <= q_hi, got [{self.q_lo}, {self.q_hi}]")
        if not -math.pi / 2 < self.th_lo <= self.th_hi < math.pi / 2:
            raise ValueError(f"need -pi/2 < th_lo <= th_hi < pi/2, got [{self.th_lo}, {self.th_hi}]")

    @classmethod
    def parse(cls, text: str) -> "ControlBounds":
        """Parse ``"q_lo,q_hi,th_lo,th_hi"`` (angles in radians)."""
        parts = [float(p) for p in text.split(",")]
        if len(parts) != 4:
            raise ValueError("bounds must be q_lo,q_hi,th_lo,th_hi")
        return cls(*parts)

    @property
    def cos_max(self) -> float:
        return math.cos(max(abs(self.th_lo), abs(self.th_hi)))


def box_bounds(bounds: ControlBounds) -> tuple[float, float, float, float]:
    """Box ``(dx_lo, dx_hi, dy_lo, dy_hi)`` implied by the speed and heading bounds."""
    return (bounds.q_lo * bounds.cos_max, bounds.q_hi,
            bounds.q_hi * math.sin(bounds.th_lo), bounds.q_hi * math.sin(bounds.th_hi))


def deviation_cost(controls: Sequence[ControlDecision]) -> float:
    return float(sum(c.dy * c.dy + (1.0 - c.dx) ** 2 for c in controls))


@dataclass(frozen=True)
class LinearConstraints:
    """Rows ``A @ (dx, dy) <= b`` for a single aircraft."""

    A: np.ndarray
    b: np.ndarray

    def residual(self, dx, dy):
        return self.A @ np.array([dx, dy]) - self.b

    def satisfied(self, dx, dy, tol: float = 1e-12) -> bool:
        return bool(np.all(self.residual(dx, dy) <= tol))


def heading_cone_constraints(bounds: ControlBounds) -> LinearConstraints:
    """``dx tan(th_lo) <= dy <= dx tan(th_hi)`` as two rows."""
    return LinearConstraints(
        A=np.array([[math.tan(bounds.th_lo), -1.0], [-math.tan(bounds.th_hi), 1.0]]),
        b=np.zeros(2),
    )


@dataclass(frozen=True)
class SpeedRing:
    """``q_lo^2 <= dx^2 + dy^2 <= q_hi^2``; the lower side is nonconvex."""

    q_lo: float
    q_hi: float

    def lower_violation(self, dx, dy) -> float:
        return max(self.q_lo ** 2 - (dx * dx + dy * dy), 0.0)

    def upper_violation(self, dx, dy) -> float:
        return max(dx * dx + dy * dy - self.q_hi ** 2, 0.0)

    def satisfied(self, dx, dy, tol: float = 1e-12) -> bool:
        return self.lower_violation(dx, dy) <= tol and self.upper_violation(dx, dy) <= tol


def speed_ring_constraints(bounds: ControlBounds) -> SpeedRing:
    return SpeedRing(bounds.q_lo, bounds.q_hi)


@dataclass(frozen=True)
class DisjunctiveConstraintPair:
    """Big-M rows of one pair's crossing-order disjunction.

    Coefficient vectors act on ``(dx_i, dy_i, dx_j, dy_j)``; with ``z`` the
    pair's binary the four rows read::

        N <= M_N (1 - z),   -N <= M_N z,   L <= M_L (1 - z),   -U <= M_U z
    """

    pair: tuple[int, int]
    geometry: PairGeometry
    n_coeffs: np.ndarray
    l_coeffs: np.ndarray
    u_coeffs: np.ndarray
    big_m_n: float
    big_m_l: float
    big_m_u: float

    @property
    def n_plane(self) -> tuple[float, float]:
        return self.geometry.p_hat.x, self.geometry.p_hat.y

    def values(self, controls4) -> tuple[float, float, float]:
        c = np.asarray(controls4, dtype=float)
        return float(self.n_coeffs @ c), float(self.l_coeffs @ c), float(self.u_coeffs @ c)

    def rows(self) -> list[tuple[np.ndarray, float, float]]:
        """``(coeffs, z_coeff, rhs)`` per row, i.e. ``coeffs @ c + z_coeff z <= rhs``."""
        return [
            (self.n_coeffs, self.big_m_n, self.big_m_n),
            (-self.n_coeffs, -self.big_m_n, 0.0),
            (self.l_coeffs, self.big_m_l, self.big_m_l),
            (-self.u_coeffs, -self.big_m_u, 0.0),
        ]

    def branch_satisfied(self, controls4, z: int, tol: float = 1e-9) -> bool:
        n, lo, up = self.values(controls4)
        scale = self._scale
        if z == 1:
            return n <= tol * scale and lo <= tol * scale
        return -n <= tol * scale and -up <= tol * scale

    @cached_property
    def _scale(self) -> float:
        return max(float(np.linalg.norm(self.n_coeffs)), 1e-300)


@dataclass(frozen=True)
class ProblemInstance:
    states: tuple[AircraftState, ...]
    d: float = 5.0
    bounds: ControlBounds = field(default_factory=ControlBounds)
    name: str = ""
    meta: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        # raises InitialLoss for a pair that starts inside the norm
        self.geometries

    @property
    def n(self) -> int:
        return len(self.states)

    @cached_property
    def pairs(self) -> tuple[tuple[int, int], ...]:
        return tuple((i, j) for i in range(self.n) for j in range(i + 1, self.n))

    @cached_property
    def geometries(self) -> tuple[PairGeometry, ...]:
        return tuple(
            tangent_halfplanes(relative_position(self.states[i], self.states[j]), self.d, i, j)
            for i, j in self.pairs
        )

    def with_bounds(self, bounds: ControlBounds) -> "ProblemInstance":
        return ProblemInstance(self.states, self.d, bounds, self.name, self.meta)


def _velocity_maps(si: AircraftState, sj: AircraftState) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients of (vx, vy) on ``(dx_i, dy_i, dx_j, dy_j)``."""
    ai, bi = si.velocity_hat
    aj, bj = sj.velocity_hat
    vx = np.array([ai, -bi, -aj, bj])
    vy = np.array([bi, ai, -bj, -aj])
    return vx, vy


def _box_max(coeffs: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> float:
    return float(np.sum(np.maximum(coeffs * lo, coeffs * hi)))


def build_disjunctions(inst: ProblemInstance) -> list[DisjunctiveConstraintPair]:
    dx_lo, dx_hi, dy_lo, dy_hi = box_bounds(inst.bounds)
    lo = np.array([dx_lo, dy_lo, dx_lo, dy_lo])
    hi = np.array([dx_hi, dy_hi, dx_hi, dy_hi])
    out = []
    for (i, j), g in zip(inst.pairs, inst.geometries):
        vx, vy = _velocity_maps(inst.states[i], inst.states[j])
        n = g.p_hat.x * vy - g.p_hat.y * vx
        lc = g.alpha_l * vy - g.beta_l * vx
        uc = g.alpha_u * vy - g.beta_u * vx
        # exact interval maxima; a floor keeps every M strictly positive
        floor = 1e-9 * float(np.linalg.norm(n))
        m_n = BIG_M_SAFETY * max(_box_max(n, lo, hi), _box_max(-n, lo, hi), floor)
        m_l = BIG_M_SAFETY * max(_box_max(lc, lo, hi), floor)
        m_u = BIG_M_SAFETY * max(_box_max(-uc, lo, hi), floor)
        out.append(DisjunctiveConstraintPair((i, j), g, n, lc, uc, m_n, m_l, m_u))
    return out


def pair_controls(controls: Sequence[ControlDecision], i: int, j: int) -> np.ndarray:
    return np.array([controls[i].dx, controls[i].dy, controls[j].dx, controls[j].dy])


def model_feasible(inst: ProblemInstance, controls: Sequence[ControlDecision],
                   z: Sequence[int], tol: float = 1e-9) -> bool:
    """Check every Model-1 constraint for the given controls and crossing orders."""
    ring = speed_ring_constraints(inst.bounds)
    cone = heading_cone_constraints(inst.bounds)
    for c in controls:
        qtol = tol * max(1.0, inst.bounds.q_hi ** 2)
        if not (ring.satisfied(c.dx, c.dy, qtol) and cone.satisfied(c.dx, c.dy, tol)):
            return False
    for disj, zk in zip(build_disjunctions(inst), z):
        i, j = disj.pair
        if not disj.branch_satisfied(pair_controls(controls, i, j), int(zk), tol):
            return False
    return True
