import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gcecsp.lp import LpModel
from gcecsp.milp import enumerate_orders
from gcecsp.model import (EventOrder, InstanceError, InvalidOrderError, Job,
                          Move, Schedule, StructuralError, base_cost,
                          check_order, cost_at, derive_precedences,
                          instance_from_dict, is_valid_order, load_instance,
                          precedence_matrix, validate_schedule)
from gcecsp.search import initial_solution, random_walk

from conftest import make_instance


def job_23():
    return Job(0, 10.0, 0.0, 10.0, 1.0, 5.0, (5.0,), (2.0, 3.0))


@pytest.mark.parametrize("t, expected", [(4.0, 2.0), (5.0, 2.0), (5.01, 5.0)])
def test_cost_at_examples(t, expected):
    assert cost_at(job_23(), t) == expected


def test_cost_at_monotone_on_generated_jobs(medium):
    for job in medium.jobs:
        grid = sorted({0.0, job.deadline, *job.jump_points,
                       *(x + 1e-9 for x in job.jump_points),
                       *(x - 1e-9 for x in job.jump_points)})
        costs = [cost_at(job, t) for t in grid]
        assert all(a <= b for a, b in zip(costs, costs[1:]))


def test_index_scheme_is_bijection(example):
    n, k = example.n, example.k
    seen = set()
    for e in example.events():
        seen.add(e.index)
        if e.kind == "start":
            assert e.index == 2 * (e.job + 1) - 1
        elif e.kind == "completion":
            assert e.index == 2 * (e.job + 1)
        else:
            assert e.index == 2 * n + (k - 1) * e.job + e.jump
            assert e.fixed_time == example.jobs[e.job].jump_points[e.jump - 1]
        assert e.plannable == (e.kind != "jump")
    assert seen == set(range(1, (k + 1) * n + 1))


def test_position_index_roundtrip(small, rng):
    order = initial_solution(small)
    for _, o in random_walk(small, order, 50, rng):
        for p in range(len(o)):
            assert o.position_of(o.index_at(p)) == p


def test_order_rejects_non_permutation():
    with pytest.raises(InvalidOrderError):
        EventOrder([0, 0, 1])


def test_positions_read_only():
    o = EventOrder([1, 0, 2])
    with pytest.raises(ValueError):
        o.positions[0] = 2


def test_moved_relocates():
    o = EventOrder([0, 1, 2, 3])
    assert o.moved(Move(0, 0, 2)).sequence == (1, 2, 0, 3)
    assert o.moved(Move(3, 3, 1)).sequence == (0, 3, 1, 2)
    with pytest.raises(InvalidOrderError):
        o.moved(Move(1, 0, 2))


def test_base_cost_extremes():
    inst = make_instance([(10, 0, 10, 1, 5, (5.0, 6.0), (1.0, 2.0, 3.0)),
                          (10, 0, 10, 1, 5, (7.0, 8.0), (0.5, 1.0, 1.0))], k=3)
    early = EventOrder([0, 1, 2, 3, 4, 5, 6, 7])
    late = EventOrder([0, 2, 4, 5, 6, 7, 1, 3])
    assert base_cost(early, inst) == pytest.approx(1.5)
    assert base_cost(late, inst) == pytest.approx(8.5)


def test_base_cost_matches_lp_schedule_cost(small):
    """Equal to the schedule's cost unless a completion lands exactly on one
    of its own jump points (then the schedule's cost is lower)."""
    checked = 0
    for order in itertools.islice(enumerate_orders(small), 300):
        sol = LpModel(small, order).solve()
        if sol.objective > 1e-9:
            continue
        t = sol.schedule.event_times
        on_jump = any(abs(t[2 * j + 1] - K) < 1e-9
                      for j, job in enumerate(small.jobs) for K in job.jump_points)
        cost = sum(cost_at(job, t[2 * j + 1]) for j, job in enumerate(small.jobs))
        if on_jump:
            assert cost <= base_cost(order, small) + 1e-9
        else:
            assert cost == pytest.approx(base_cost(order, small))
            checked += 1
    assert checked > 0


def test_precedences_single_job():
    inst = make_instance([(10, 0, 10, 1, 5, (8.0,), (1.0, 1.0))])
    assert derive_precedences(inst) == {(0, 1)}


def test_precedences_fixed_before_late_job():
    # jump of job 0 at 2.0; job 1 released at 2.5 with E/P+ = 0.9
    inst = make_instance([(10, 0, 3, 5, 10, (2.0,), (1.0, 1.0)),
                          (45, 2.5, 4, 10, 50, (3.5,), (1.0, 1.0))])
    pairs = derive_precedences(inst)
    f = inst.jump_event(0, 1)
    assert (f, 2) in pairs and (f, 3) in pairs


def test_precedences_disjoint_windows():
    inst = make_instance([(5, 0, 1.0, 1, 10, (0.9,), (1.0, 1.0)),
                          (5, 1.5, 3.0, 1, 10, (2.5,), (1.0, 1.0))])
    assert (1, 2) in derive_precedences(inst)


def test_precedences_are_sound(small):
    """Every order that breaks a derived pair has a positive LP penalty."""
    full = precedence_matrix(small)
    minimal = np.zeros_like(full)
    for j in range(small.n):
        minimal[2 * j, 2 * j + 1] = True
    a, b = np.nonzero(full)
    broken = 0
    for order in enumerate_orders(small, minimal):
        pos = order.positions
        if not (pos[a] > pos[b]).any():
            continue
        broken += 1
        assert LpModel(small, order, check=False).solve().objective > 1e-6
    assert broken > 0


def test_check_order_errors(example):
    order = initial_solution(example)
    check_order(example, order)
    seq = list(order.sequence)
    with pytest.raises(InvalidOrderError):
        check_order(example, EventOrder(list(range(5))))
    s0 = seq.index(0)
    c0 = seq.index(1)
    swapped = seq.copy()
    swapped[s0], swapped[c0] = 1, 0
    assert not is_valid_order(example, EventOrder(swapped))
    fixed = [e for e in seq if e >= example.n_plannable]
    bad = [e for e in seq if e < example.n_plannable] + fixed[::-1]
    with pytest.raises(InvalidOrderError, match="time order"):
        check_order(example, EventOrder(bad))


def test_loader_reports_job(tmp_path, example):
    data = example.to_dict()
    data["jobs"][1]["deadline"] = 0.5
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    with pytest.raises(InstanceError, match="job 1"):
        load_instance(path)
    path.write_text("{not json")
    with pytest.raises(InstanceError, match="invalid JSON"):
        load_instance(path)


@pytest.mark.parametrize("field, value, msg", [
    ("P_max", 12.0, "minimum processing"),
    ("weights", [1.0, -1.0, 0.0], "non-negative"),
    ("jumps", [2.9, 2.5], "ascending"),
    ("jumps", [1.0, 2.5], "jump points must lie"),
    ("P_min", 0.0, "lower rate"),
])
def test_loader_invariants(example, field, value, msg):
    data = example.to_dict()
    data["jobs"][0][field] = value
    with pytest.raises(InstanceError, match=msg):
        instance_from_dict(data)


def test_instance_roundtrip(example):
    again = instance_from_dict(json.loads(example.to_json()))
    assert again.to_dict() == example.to_dict()


def _feasible_solution(inst):
    from gcecsp.milp import brute_force_optimum
    res = brute_force_optimum(inst)
    return res.order, res.schedule


def test_validate_accepts_lp_schedule(example):
    order, sched = _feasible_solution(example)
    assert validate_schedule(example, order, sched).passed


def test_validate_rejects_perturbation(example):
    order, sched = _feasible_solution(example)
    p = sched.consumptions.copy()
    j, i = np.argwhere(p > 1.0)[0]
    p[j, i] += 2e-6
    rep = validate_schedule(example, order, Schedule(sched.event_times, p))
    assert {"C1_requirement", "C5_rate_bounds", "C6_capacity"} & set(rep.failed())


def test_validate_zero_consumption(example):
    order, sched = _feasible_solution(example)
    rep = validate_schedule(example, order,
                            Schedule(sched.event_times, np.zeros_like(sched.consumptions)))
    assert "C1_requirement" in rep.failed()
    assert rep.checks["C1_requirement"].worst == pytest.approx(example.requirements.max())


def test_validate_dimension_mismatch(example):
    order, sched = _feasible_solution(example)
    with pytest.raises(StructuralError):
        validate_schedule(example, order, Schedule(sched.event_times[:-1],
                                                sched.consumptions))


def test_validate_agrees_with_lp(small, rng):
    order = initial_solution(small)
    for _, o in random_walk(small, order, 40, rng):
        sol = LpModel(small, o).solve()
        assert validate_schedule(small, o, sol.schedule).passed == (sol.objective <= 1e-6)


def test_schedule_dict_roundtrip(example):
    order, sched = _feasible_solution(example)
    again = Schedule.from_dict(json.loads(json.dumps(sched.to_dict())))
    np.testing.assert_array_equal(again.event_times, sched.event_times)
    np.testing.assert_array_equal(again.consumptions, sched.consumptions)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 7), min_size=8, max_size=8, unique=True),
       st.integers(0, 7), st.integers(0, 7))
def test_move_inverse_restores(seq, src, dst):
    o = EventOrder(seq)
    mv = Move(o.index_at(src), src, dst)
    assert o.moved(mv).moved(mv.inverse()) == o
