import re
from pathlib import Path

import numpy as np
import pytest

from gcecsp.estimators import instance_feasibility_flow
from gcecsp.instancegen import GenConfig, generate_instance
from gcecsp.milp import (FAMILIES, OracleLimitError, big_m, brute_force_optimum,
                         enumerate_orders, export_milp, milp_counts)
from gcecsp.model import base_cost, is_valid_order, load_instance, validate_schedule

from conftest import make_instance

DATA = Path(__file__).parent / "data"


def test_counts_n2_k2():
    c = milp_counts(2, 2)
    assert c["rows"] == {
        "event_order": 30, "deadline": 2, "release": 2, "requirement": 2,
        "lower_bound": 24, "upper_bound": 24, "zero_finish": 8,
        "zero_start": 8, "interval_capacity": 12, "exclusive_order": 15,
        "one_successor_1": 12, "one_successor_2": 12, "total_successors": 1,
        "max_window": 2, "min_window": 2}
    assert c["columns"] == {"t": 6, "p": 8, "a": 30, "b": 12}


@pytest.mark.parametrize("n, k", [(1, 2), (2, 2), (2, 3), (3, 4)])
def test_export_matches_closed_form(n, k):
    inst = generate_instance(GenConfig(n=n, k=k, seed=0))
    model = export_milp(inst)
    assert model.row_counts == milp_counts(n, k)["rows"]
    assert model.column_counts == milp_counts(n, k)["columns"]
    names = re.findall(r"^ (\w+):", model.text, re.M)
    assert len(names) == len(set(names)) == sum(model.row_counts.values()) + 1
    assert set(model.row_counts) == set(FAMILIES)
    # the diagonal order binary never appears
    assert not re.search(r"\bA(\d+)_\1\b", model.text)


def test_max_window_one_row_per_job():
    inst = make_instance([(10, 0, 10, 1, 5, (8.0,), (1.0, 1.0))])
    assert export_milp(inst).row_counts["max_window"] == 1


def test_big_m_covers_horizon_and_successors(example):
    M = big_m(example)
    assert M >= example.horizon * example.capacity
    assert M >= 2 * example.n


def test_golden_file_bytes():
    inst = load_instance(DATA / "golden_n2k2.json")
    text = export_milp(inst).text
    assert text == (DATA / "golden_n2k2.lp").read_text()
    assert export_milp(inst).text == text


def _solve_with_highs(highspy, text, tmp_path):
    path = tmp_path / "m.lp"
    path.write_text(text)
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("mip_rel_gap", 0.0)
    h.readModel(str(path))
    h.run()
    return h


@pytest.mark.parametrize("n, k, seed", [(1, 2, 0), (1, 3, 1), (2, 2, 0),
                                        (2, 2, 3), (2, 3, 2), (3, 2, 5)])
def test_milp_optimum_equals_oracle(n, k, seed, tmp_path):
    highspy = pytest.importorskip("highspy")
    inst = generate_instance(GenConfig(n=n, k=k, seed=seed))
    model = export_milp(inst)
    h = _solve_with_highs(highspy, model.text, tmp_path)
    assert h.getNumRow() == sum(model.row_counts.values())
    status = h.modelStatusToString(h.getModelStatus())
    oracle = brute_force_optimum(inst)
    if oracle.feasible:
        assert status == "Optimal"
        assert h.getInfo().objective_function_value == pytest.approx(
            oracle.objective, abs=1e-6)
    else:
        assert status == "Infeasible"


def test_oracle_single_job():
    inst = make_instance([(10, 0, 10, 1, 5, (8.0,), (1.0, 3.0))])
    res = brute_force_optimum(inst)
    assert res.feasible and res.objective == 1.0
    assert res.orders_enumerated == 3
    assert validate_schedule(inst, res.order, res.schedule).passed


def test_oracle_separable_windows():
    a = (10, 0, 4, 1, 5, (2.5,), (1.0, 2.0))
    b = (10, 5, 9, 1, 5, (7.5,), (0.5, 4.0))
    joint = brute_force_optimum(make_instance([a, b]))
    solo = [brute_force_optimum(make_instance([x])).objective for x in (a, b)]
    assert joint.objective == pytest.approx(sum(solo))


def test_oracle_capacity_infeasible():
    inst = make_instance([(60, 0, 2, 1, 50, (2.0,), (1.0, 1.0)),
                          (60, 0, 2, 1, 50, (2.0,), (1.0, 1.0))])
    assert not instance_feasibility_flow(inst)
    assert not brute_force_optimum(inst).feasible


def test_oracle_not_above_any_feasible_order(small):
    from gcecsp.lp import LpModel
    res = brute_force_optimum(small)
    rng = np.random.default_rng(0)
    orders = list(enumerate_orders(small))
    for idx in rng.choice(len(orders), 40, replace=False):
        o = orders[idx]
        assert is_valid_order(small, o)
        if LpModel(small, o).solve().objective <= 1e-6:
            assert res.objective <= base_cost(o, small) + 1e-9


def test_oracle_limit(medium):
    with pytest.raises(OracleLimitError):
        brute_force_optimum(medium)


def test_oracle_result_dict(example):
    d = brute_force_optimum(example).to_dict()
    assert d["feasible"] and d["objective"] == pytest.approx(3.5)
    assert sorted(d["order"]) == list(range(example.n_events))
