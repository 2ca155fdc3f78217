"""Pairwise separation geometry.

Everything here is a pure function of relative position, relative velocity
and the separation norm ``d``.  Functions taking a velocity accept either a
single 2-vector or an ``(..., 2)`` array and broadcast.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InitialLoss, ZeroRelativeVelocity

TOL = 1e-9


class Vec2(NamedTuple):
    x: float
    y: float

    def norm(self) -> float:
        return math.hypot(self.x, self.y)


@dataclass(frozen=True)
class AircraftState:
    """Initial position (NM), speed (NM/h) and heading (rad) of one aircraft."""

    position: Vec2
    speed_hat: float
    heading_hat: float

    def __post_init__(self):
        if not self.speed_hat > 0:
            raise ValueError(f"speed_hat must be positive, got {self.speed_hat}")
        if not (math.isfinite(self.position.x) and math.isfinite(self.position.y)):
            raise ValueError("position must be finite")

    @property
    def velocity_hat(self) -> Vec2:
        return Vec2(self.speed_hat * math.cos(self.heading_hat),
                    self.speed_hat * math.sin(self.heading_hat))


@dataclass(frozen=True)
class SeparationPolynomial:
    """f(t) = a t^2 + b t + c, the squared distance minus d^2."""

    a: float
    b: float
    c: float

    @classmethod
    def from_motion(cls, p_hat, v, d: float) -> "SeparationPolynomial":
        px, py = p_hat
        vx, vy = v
        return cls(vx * vx + vy * vy, 2.0 * (px * vx + py * vy), px * px + py * py - d * d)

    def __call__(self, t):
        return (self.a * t + self.b) * t + self.c


def _xy(v):
    v = np.asarray(v, dtype=float)
    return v[..., 0], v[..., 1]


def relative_velocity(si: AircraftState, sj: AircraftState, ci, cj) -> Vec2:
    """Relative velocity v_i - v_j after applying controls ``ci`` and ``cj``.

    Each control is a complex multiplier ``dx + i dy`` applied to the
    aircraft's initial velocity phasor.
    """
    wi = complex(ci.dx, ci.dy) * complex(*si.velocity_hat)
    wj = complex(cj.dx, cj.dy) * complex(*sj.velocity_hat)
    w = wi - wj
    return Vec2(w.real, w.imag)


def time_of_min_separation(p_hat, v) -> float:
    px, py = p_hat
    vx, vy = v
    vv = vx * vx + vy * vy
    if vv < 1e-12:
        raise ZeroRelativeVelocity("relative velocity is zero")
    return -(px * vx + py * vy) / vv


def g_value(p_hat, d: float, v):
    """Separation discriminant ``|v|^2 f(t_m)``; nonnegative means no conflict for converging pairs."""
    px, py = p_hat
    vx, vy = _xy(v)
    out = vx * vx * (py * py - d * d) + vy * vy * (px * px - d * d) - 2.0 * px * py * vx * vy
    return out if np.ndim(out) else float(out)


def is_pair_conflict_free(p_hat, d: float, v):
    """Exact oracle: True iff ``|p_hat + v t| >= d`` for every t >= 0."""
    px, py = p_hat
    vx, vy = _xy(v)
    pn2 = px * px + py * py
    vv = vx * vx + vy * vy
    scale_v = np.where(vv > 0, vv, 1.0)
    diverging = (px * vx + py * vy) / np.sqrt(pn2 * scale_v) >= -TOL
    separated = g_value(p_hat, d, np.stack([vx, vy], axis=-1)) / (pn2 * scale_v) >= -TOL
    out = (vv < 1e-12) | diverging | separated
    out = out & (pn2 >= d * d * (1 - TOL))
    return bool(out) if np.ndim(out) == 0 else out


def min_separation_margin(p_hat, d: float, v):
    """min over t >= 0 of ``|p_hat + v t| - d`` in closed form."""
    px, py = p_hat
    vx, vy = _xy(v)
    pn2 = px * px + py * py
    dot = px * vx + py * vy
    vv = vx * vx + vy * vy
    closest = np.where((dot < 0) & (vv > 1e-12),
                       np.sqrt(np.maximum(pn2 - dot * dot / np.where(vv > 0, vv, 1.0), 0.0)),
                       math.sqrt(pn2))
    out = closest - d
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class PairGeometry:
    """Preprocessed constants of the crossing-order disjunction for one pair.

    Branch ``z = 1`` is ``N(v) <= 0 and L(v) <= 0``; branch ``z = 0`` is
    ``N(v) >= 0 and U(v) >= 0``, where ``N(v) = x vy - y vx``,
    ``L(v) = alpha_l vy - beta_l vx`` and ``U(v) = alpha_u vy - beta_u vx``.
    """

    i: int
    j: int
    p_hat: Vec2
    d: float
    E: float
    alpha_l: float
    beta_l: float
    alpha_u: float
    beta_u: float
    phi: float

    def n_value(self, v):
        vx, vy = _xy(v)
        return self.p_hat.x * vy - self.p_hat.y * vx

    def lower_value(self, v):
        vx, vy = _xy(v)
        return self.alpha_l * vy - self.beta_l * vx

    def upper_value(self, v):
        vx, vy = _xy(v)
        return self.alpha_u * vy - self.beta_u * vx

    def branch_satisfied(self, v, z: int, tol: float = TOL):
        """Membership of ``v`` in one branch, with tolerance on unit-scaled values."""
        vx, vy = _xy(v)
        scale = self.p_hat.norm() * np.maximum(np.hypot(vx, vy), 1e-300)
        n = self.n_value(v) / scale
        if z == 1:
            return (n <= tol) & (self.lower_value(v) / scale <= tol)
        return (n >= -tol) & (self.upper_value(v) / scale >= -tol)

    def in_region(self, v, tol: float = TOL):
        return self.branch_satisfied(v, 1, tol) | self.branch_satisfied(v, 0, tol)


def tangent_halfplanes(p_hat, d: float, i: int = 0, j: int = 1) -> PairGeometry:
    """Collision-cone boundary directions for a pair at relative position ``p_hat``.

    The two tangent lines of the cone are ``p_hat`` rotated by +/- phi with
    phi = arcsin(d / |p_hat|).  ``(alpha_l, beta_l)`` is the +phi rotation and
    bounds the clockwise side of the cone (``N <= 0``); ``(alpha_u, beta_u)`` is
    the -phi rotation and bounds the counter-clockwise side.
    """
    px, py = float(p_hat[0]), float(p_hat[1])
    r2 = px * px + py * py
    if r2 < d * d * (1 - TOL):
        raise InitialLoss(f"pair ({i}, {j}) starts at distance {math.sqrt(r2):.6g} < d = {d}")
    r = math.sqrt(r2)
    ratio = min(d / r, 1.0)
    phi = math.asin(ratio)
    E = math.sqrt(max(r2 - d * d, 0.0))
    c, s = math.cos(phi), math.sin(phi)
    return PairGeometry(
        i=i, j=j, p_hat=Vec2(px, py), d=d, E=E,
        alpha_l=c * px - s * py, beta_l=s * px + c * py,
        alpha_u=c * px + s * py, beta_u=-s * px + c * py,
        phi=phi,
    )


def relative_position(si: AircraftState, sj: AircraftState) -> Vec2:
    return Vec2(si.position.x - sj.position.x, si.position.y - sj.position.y)


def count_conflicts(states: Sequence[AircraftState], d: float) -> int:
    """Number of pairs that lose separation if nobody manoeuvres."""
    n = 0
    for i in range(len(states)):
        for j in range(i + 1, len(states)):
            p = relative_position(states[i], states[j])
            if p.norm() < d * (1 - TOL):
                raise InitialLoss(f"pair ({i}, {j}) starts inside the separation norm")
            vi, vj = states[i].velocity_hat, states[j].velocity_hat
            v = (vi.x - vj.x, vi.y - vj.y)
            if not is_pair_conflict_free(p, d, v):
                n += 1
    return n
