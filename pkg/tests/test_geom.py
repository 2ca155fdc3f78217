import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import min_distance_by_stepping
from deconflict.errors import InitialLoss, ZeroRelativeVelocity
from deconflict.geom import (AircraftState, SeparationPolynomial, Vec2, count_conflicts, g_value,
                             is_pair_conflict_free, min_separation_margin, relative_velocity,
                             tangent_halfplanes, time_of_min_separation)
from deconflict.instances import generate_cp
from deconflict.model import ControlDecision

coord = st.floats(-200, 200, allow_nan=False)


def test_relative_velocity_head_on():
    a = AircraftState(Vec2(0, 0), 500.0, 0.0)
    b = AircraftState(Vec2(100, 0), 500.0, math.pi)
    v = relative_velocity(a, b, ControlDecision.identity(), ControlDecision.identity())
    assert v.x == pytest.approx(1000.0)
    assert v.y == pytest.approx(0.0, abs=1e-9)


def test_relative_velocity_identical_is_zero():
    a = AircraftState(Vec2(0, 0), 480.0, 0.3)
    c = ControlDecision.from_polar(0.97, 0.1)
    v = relative_velocity(a, a, c, c)
    assert v.norm() == 0.0


def test_relative_velocity_matches_trig_form(rng):
    for _ in range(200):
        si = AircraftState(Vec2(*rng.uniform(-100, 100, 2)), rng.uniform(400, 600), rng.uniform(-math.pi, math.pi))
        sj = AircraftState(Vec2(*rng.uniform(-100, 100, 2)), rng.uniform(400, 600), rng.uniform(-math.pi, math.pi))
        qi, qj = rng.uniform(0.9, 1.1, 2)
        ti, tj = rng.uniform(-0.5, 0.5, 2)
        v = relative_velocity(si, sj, ControlDecision.from_polar(qi, ti), ControlDecision.from_polar(qj, tj))
        vx = qi * si.speed_hat * math.cos(si.heading_hat + ti) - qj * sj.speed_hat * math.cos(sj.heading_hat + tj)
        vy = qi * si.speed_hat * math.sin(si.heading_hat + ti) - qj * sj.speed_hat * math.sin(sj.heading_hat + tj)
        assert v.x == pytest.approx(vx, rel=1e-12, abs=1e-9)
        assert v.y == pytest.approx(vy, rel=1e-12, abs=1e-9)


def test_time_of_min_separation_examples():
    assert time_of_min_separation((10, 0), (-2, 0)) == pytest.approx(5.0)
    assert time_of_min_separation((10, 0), (1, 0)) == pytest.approx(-10.0)
    with pytest.raises(ZeroRelativeVelocity):
        time_of_min_separation((10, 0), (0, 0))


def test_time_of_min_separation_grid_oracle(rng):
    for _ in range(100):
        p = rng.uniform(-50, 50, 2)
        v = rng.uniform(-10, 10, 2)
        t = np.linspace(-100, 100, 400_001)
        dist = np.hypot(p[0] + v[0] * t, p[1] + v[1] * t)
        assert time_of_min_separation(p, v) == pytest.approx(t[np.argmin(dist)], abs=2 * (t[1] - t[0]))


def test_g_value_examples():
    assert g_value((10, 0), 5, (0, 1)) == pytest.approx(75.0)
    assert g_value((10, 0), 5, (-1, 0)) == pytest.approx(-25.0)


def test_g_value_is_scaled_polynomial_minimum(rng):
    for _ in range(200):
        p = rng.uniform(-50, 50, 2)
        v = rng.uniform(-10, 10, 2)
        d = 5.0
        poly = SeparationPolynomial.from_motion(p, v, d)
        tm = time_of_min_separation(p, v)
        assert g_value(p, d, v) == pytest.approx((v @ v) * poly(tm), rel=1e-9, abs=1e-9)


def test_conflict_free_examples():
    assert is_pair_conflict_free((10, 0), 5, (10, 0))
    assert not is_pair_conflict_free((10, 0), 5, (-1, 0))
    assert is_pair_conflict_free((10, 0), 5, (0, 0))


def test_conflict_free_matches_time_stepping(rng):
    mismatches = 0
    checked = 0
    for _ in range(20):
        p = rng.uniform(-100, 100, 2)
        if np.hypot(*p) < 6:
            continue
        for v in rng.uniform(-20, 20, (250, 2)):
            m = min_distance_by_stepping(p, v, steps=20_001) - 5.0
            if abs(m) < 1e-6 * max(1.0, np.hypot(*p)):
                continue
            checked += 1
            mismatches += bool(is_pair_conflict_free(p, 5.0, v)) != (m >= 0)
    assert checked > 4000
    assert mismatches == 0


def test_min_separation_margin_matches_stepping(rng):
    for _ in range(200):
        p = rng.uniform(-100, 100, 2)
        v = rng.uniform(-20, 20, 2)
        assert min_separation_margin(p, 5.0, v) == pytest.approx(min_distance_by_stepping(p, v) - 5.0, abs=1e-6)


def test_tangent_halfplanes_reference_case():
    g = tangent_halfplanes((10, 0), 5)
    assert g.phi == pytest.approx(math.pi / 6)
    assert g.E == pytest.approx(math.sqrt(75))
    for a, b in ((g.alpha_l, g.beta_l), (g.alpha_u, g.beta_u)):
        assert g_value((10, 0), 5, (a, b)) == pytest.approx(0.0, abs=1e-9)
        # parallel to (-cos(pi/6), +-1/2)
        assert abs(a * 0.5) == pytest.approx(abs(b) * math.cos(math.pi / 6), rel=1e-12)


def test_tangent_halfplanes_degenerate_and_rejects():
    g = tangent_halfplanes((5, 0), 5)
    assert g.phi == pytest.approx(math.pi / 2)
    with pytest.raises(InitialLoss):
        tangent_halfplanes((4.9, 0), 5)


def test_root_property(rng):
    for _ in range(200):
        p = rng.uniform(-100, 100, 2)
        if np.hypot(*p) < 5:
            continue
        g = tangent_halfplanes(p, 5.0)
        scale = np.hypot(*p) ** 4
        assert abs(g_value(p, 5.0, (g.alpha_l, g.beta_l))) <= 1e-6 * scale
        assert abs(g_value(p, 5.0, (g.alpha_u, g.beta_u))) <= 1e-6 * scale
        assert g.E ** 2 == pytest.approx(p @ p - 25.0, rel=1e-9)


def test_region_equivalence_sampled(rng):
    for _ in range(20):
        p = rng.uniform(-100, 100, 2)
        if np.hypot(*p) < 5:
            continue
        g = tangent_halfplanes(p, 5.0)
        v = rng.uniform(-40, 40, (20_000, 2))
        exact = (v @ p >= 0) | (g_value(p, 5.0, v) >= 0)
        region = g.in_region(v)
        # normalized distance to any boundary; skip the tolerance band
        vn = np.hypot(v[:, 0], v[:, 1]) * np.hypot(*p)
        band = np.minimum.reduce([np.abs(g.n_value(v)), np.abs(g.lower_value(v)), np.abs(g.upper_value(v)),
                                  np.abs(v @ p)]) / vn
        keep = band > 1e-6
        assert np.all(exact[keep] == region[keep])


def test_count_conflicts_cp():
    for n in (2, 4, 7):
        assert count_conflicts(generate_cp(n).states, 5.0) == n * (n - 1) // 2


def test_count_conflicts_parallel():
    a = AircraftState(Vec2(0, 0), 500, 0.0)
    b = AircraftState(Vec2(0, 10), 500, 0.0)
    assert count_conflicts([a, b], 5.0) == 0


@given(coord, coord, coord, coord, st.floats(0.1, 10))
def test_scaling_and_symmetry(px, py, vx, vy, lam):
    if math.hypot(px, py) < 5:
        return
    p, v = (px, py), (vx, vy)
    assert g_value(p, 5, (lam * vx, lam * vy)) == pytest.approx(lam ** 2 * g_value(p, 5, v), rel=1e-9, abs=1e-6)
    assert g_value((-px, -py), 5, (-vx, -vy)) == pytest.approx(g_value(p, 5, v), rel=1e-12, abs=1e-9)
    free = is_pair_conflict_free(p, 5, v)
    assert is_pair_conflict_free((-px, -py), 5, (-vx, -vy)) == free
    assert is_pair_conflict_free(p, 5, (lam * vx, lam * vy)) == free


@given(coord, coord, coord, coord)
def test_tm_sign(px, py, vx, vy):
    if vx * vx + vy * vy < 1e-6:
        return
    dot = px * vx + py * vy
    if abs(dot) < 1e-9:
        return
    assert (dot > 0) == (time_of_min_separation((px, py), (vx, vy)) < 0)
