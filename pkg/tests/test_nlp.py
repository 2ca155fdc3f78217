import numpy as np
import pytest

from conftest import head_on, polar_grid_search
from deconflict.errors import Infeasible
from deconflict.instances import generate_cp, generate_rcp
from deconflict.model import ControlBounds
from deconflict.relax import build_lb_miqcp, build_lb_miqp, build_ub_nlp
from deconflict.solve import solve_mip
from deconflict.solve.nlp import solve_local_nlp


@pytest.mark.parametrize("z", [0, 1])
def test_head_on_matches_grid(z):
    # tighter speed floor so the ring lower bound matters
    inst = head_on(dist=30.0, bounds=ControlBounds(0.99, 1.03, -np.pi / 6, np.pi / 6))
    sol = solve_local_nlp(build_ub_nlp(inst, [z]), np.array([1.0, 0.0, 1.0, 0.0]))
    oracle, _ = polar_grid_search(inst, z=z)
    assert sol.objective == pytest.approx(oracle, abs=1e-3)
    assert build_ub_nlp(inst, [z]).max_violation(sol.point) <= 1e-9


def test_two_orders_are_symmetric():
    inst = head_on(dist=30.0)
    a = solve_local_nlp(build_ub_nlp(inst, [0]), np.array([1.0, 0.0, 1.0, 0.0]))
    b = solve_local_nlp(build_ub_nlp(inst, [1]), np.array([1.0, 0.0, 1.0, 0.0]))
    assert a.objective == pytest.approx(b.objective, abs=1e-8)


def test_descent_from_feasible_start():
    for seed in range(5):
        inst = generate_rcp(6, seed=seed)
        lb = solve_mip(build_lb_miqcp(inst))
        model = build_ub_nlp(inst, lb.z)
        # a feasible start: the relaxed point pushed out to the ring where needed
        x0 = lb.point[: 2 * inst.n].copy().reshape(-1, 2)
        if model.max_violation(x0.ravel()) > 1e-9:
            continue
        sol = solve_local_nlp(model, x0.ravel())
        assert sol.objective <= model.objective(x0.ravel()) + 1e-12
        assert model.max_violation(sol.point) <= 1e-9


def test_repairs_ring_violation():
    fixed = 0
    for seed in range(40):
        inst = generate_rcp(10, seed=seed)
        lb = solve_mip(build_lb_miqcp(inst))
        model = build_ub_nlp(inst, lb.z)
        if model.max_violation(lb.point[: 2 * inst.n]) <= 1e-6:
            continue
        sol = solve_local_nlp(model, lb.point[: 2 * inst.n])
        assert model.max_violation(sol.point) <= 1e-9
        assert sol.objective >= lb.objective - 1e-9
        q = np.hypot(*sol.point.reshape(-1, 2).T)
        assert np.all(q >= inst.bounds.q_lo - 1e-9) and np.all(q <= inst.bounds.q_hi + 1e-9)
        fixed += 1
    assert fixed >= 3


def test_infeasible_order_raises():
    inst = generate_cp(2).with_bounds(ControlBounds(1.0, 1.0, 0.0, 0.0))
    with pytest.raises(Infeasible):
        solve_local_nlp(build_ub_nlp(inst, [1]), np.array([1.0, 0.0, 1.0, 0.0]))


def test_rejects_lower_bound_models():
    with pytest.raises(ValueError):
        solve_local_nlp(build_lb_miqp(generate_cp(3)), np.ones(6))


def test_deterministic():
    inst = generate_rcp(10, seed=3)
    lb = solve_mip(build_lb_miqcp(inst))
    a = solve_local_nlp(build_ub_nlp(inst, lb.z), lb.point)
    b = solve_local_nlp(build_ub_nlp(inst, lb.z), lb.point)
    assert np.array_equal(a.point, b.point)
