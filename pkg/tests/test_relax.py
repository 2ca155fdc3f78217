import math

import numpy as np
import pytest

from conftest import head_on, polar_grid_search
from deconflict.geom import AircraftState, Vec2
from deconflict.instances import generate_cp, generate_rcp
from deconflict.model import ControlBounds, ControlDecision, ProblemInstance, box_bounds
from deconflict.relax import (EnvelopeVariant, ModelKind, build_lb_miqcp, build_lb_miqp, build_ub_nlp,
                              check_bound_violations, hull_envelope)
from deconflict.solve import solve_mip


def test_envelope_default_values():
    env = hull_envelope(ControlBounds())
    assert env.secant_x == pytest.approx((1.81406, -0.81406), abs=1e-5)
    assert env.secant_y[0] == pytest.approx(0.0, abs=1e-15)
    assert env.secant_y[1] == pytest.approx(0.265225, abs=1e-12)
    assert env.q_lo_sq == pytest.approx(0.94 ** 2)


def test_envelope_no_heading_freedom():
    env = hull_envelope(ControlBounds(0.94, 1.03, 0.0, 0.0))
    assert env.secant_y == (0.0, 0.0)


@pytest.mark.parametrize("variant", list(EnvelopeVariant))
def test_envelope_overestimates_squares(variant, rng):
    b = ControlBounds()
    env = hull_envelope(b, variant)
    x = rng.uniform(*env.x_range, 10_000)
    assert np.all(x * x <= env.secant_x[0] * x + env.secant_x[1] + 1e-12)
    y = rng.uniform(*env.y_range, 10_000)
    assert np.all(y * y <= env.secant_y[0] * y + env.secant_y[1] + 1e-12)


def test_qbar_variant_covers_whole_box(rng):
    b = ControlBounds()
    env = hull_envelope(b, EnvelopeVariant.QBAR)
    dx_lo, dx_hi, _, _ = box_bounds(b)
    x = rng.uniform(dx_lo, dx_hi, 10_000)
    assert np.all(x * x <= env.secant_x[0] * x + env.secant_x[1] + 1e-12)


@pytest.mark.parametrize("variant", list(EnvelopeVariant))
def test_envelope_soundness(variant, rng):
    b = ControlBounds()
    env = hull_envelope(b, variant)
    q = rng.uniform(b.q_lo, b.q_hi, 20_000)
    t = rng.uniform(b.th_lo, b.th_hi, 20_000)
    dx, dy = q * np.cos(t), q * np.sin(t)
    # largest admissible aux values still reach q_lo^2
    tx = np.maximum(env.secant_x[0] * dx + env.secant_x[1], 0)
    ty = np.maximum(env.secant_y[0] * dy + env.secant_y[1], 0)
    assert np.all(tx + ty >= env.q_lo_sq - 1e-12)


def test_single_aircraft_zero():
    inst = ProblemInstance((AircraftState(Vec2(0, 0), 500, 0.0),), 5.0)
    sol = solve_mip(build_lb_miqp(inst))
    assert sol.objective == pytest.approx(0.0, abs=1e-12)
    assert sol.point[:2] == pytest.approx([1.0, 0.0])


def test_cp4_objective():
    sol = solve_mip(build_lb_miqp(generate_cp(4)))
    assert sol.objective == pytest.approx(0.001250, rel=1e-3)
    assert sol.gap <= 1e-6


def test_head_on_matches_grid():
    inst = head_on()
    lb = solve_mip(build_lb_miqp(inst)).objective
    oracle, _ = polar_grid_search(inst)
    assert lb == pytest.approx(oracle, abs=1e-4)
    assert solve_mip(build_lb_miqcp(inst)).objective == pytest.approx(oracle, abs=1e-4)


def test_relaxation_chain_structure():
    inst = generate_rcp(5, seed=2)
    a, b = build_lb_miqp(inst), build_lb_miqcp(inst)
    assert np.array_equal(a.G, b.G) and np.array_equal(a.h, b.h)
    assert a.soc == [] and len(b.soc) == inst.n
    assert a.kind is ModelKind.LB_MIQP and b.kind is ModelKind.LB_MIQCP


def test_relaxation_ordering():
    for seed in range(6):
        inst = generate_rcp(5, seed=seed)
        a = solve_mip(build_lb_miqp(inst)).objective
        b = solve_mip(build_lb_miqcp(inst)).objective
        assert a <= b + 1e-9


def test_upper_ring_active_only_above_qbar():
    for seed in range(6):
        inst = generate_rcp(5, seed=seed)
        a = solve_mip(build_lb_miqp(inst))
        b = solve_mip(build_lb_miqcp(inst))
        if all(c.q <= inst.bounds.q_hi + 1e-9 for c in build_lb_miqp(inst).controls(a.point)):
            assert b.objective == pytest.approx(a.objective, abs=1e-8)


def test_ub_nlp_structure():
    inst = generate_cp(3)
    m = build_ub_nlp(inst, [1, 0, 1])
    assert m.kind is ModelKind.UB_NLP and m.ring_lo == inst.bounds.q_lo
    assert len(m.z_index) == 0 and m.n_vars == 6
    with pytest.raises(ValueError):
        build_ub_nlp(inst, [1, 0])
    with pytest.raises(ValueError):
        build_ub_nlp(inst, [1, 0, 2])


def test_check_bound_violations():
    b = ControlBounds()
    assert check_bound_violations([ControlDecision.identity()] * 4, b) == 0
    qs = [0.93, 0.94, 0.9399995, 1.0, 1.03, 1.0300005, 1.031, 0.5]
    cs = [ControlDecision.from_polar(q, 0.1) for q in qs]
    assert check_bound_violations(cs, b) == 3


def test_objective_matches_deviation_cost(rng):
    inst = generate_rcp(4, seed=1)
    m = build_lb_miqp(inst)
    x = rng.uniform(0.8, 1.1, m.n_vars)
    cs = m.controls(x)
    assert m.objective(x) == pytest.approx(sum(c.dy ** 2 + (1 - c.dx) ** 2 for c in cs), abs=1e-12)
