"""Full MILP export and an exact oracle for tiny instances.

Variable names use the 1-based event index: ``T{i}`` event times,
``P{j}_{i}`` consumption of job ``j`` in interval ``i``, ``A{i}_{i'}`` order
binaries (1 if event i occurs before i'), ``B{i}_{i'}`` plannable successor
binaries. ``A{i}_{i}`` is the constant 0 and never written.

Row families (``N = (k+1)n``, ``m = 2n``)::

    event_order       N(N-1)         t_i <= t_i' + M a_i'i
    deadline          n
    release           n
    requirement       n
    lower_bound       n m(m-1)
    upper_bound       n m(m-1)
    zero_finish       n m            p_ji <= M a_i,C(j)
    zero_start        n m            p_ji <= M (1 - a_i,S(j))
    interval_capacity m(m-1)
    exclusive_order   N(N-1)/2
    one_successor_1   m(m-1)
    one_successor_2   m(m-1)
    total_successors  1
    max_window        n              only for jobs with P- > 0
    min_window        n
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimators import simple_bounds_cold
from .lp import LpModel
from .lpformat import LpWriter
from .model import (EventOrder, Instance, Schedule, base_cost,
                    precedence_matrix)

FAMILIES = ("event_order", "deadline", "release", "requirement",
            "lower_bound", "upper_bound", "zero_finish", "zero_start",
            "interval_capacity", "exclusive_order", "one_successor_1",
            "one_successor_2", "total_successors", "max_window", "min_window")
PREFIX = {"event_order": "ord", "deadline": "dl", "release": "rel",
          "requirement": "req", "lower_bound": "lb", "upper_bound": "ub",
          "zero_finish": "zf", "zero_start": "zs", "interval_capacity": "cap",
          "exclusive_order": "ex", "one_successor_1": "sa",
          "one_successor_2": "sb", "total_successors": "nsucc",
          "max_window": "wmax", "min_window": "wmin"}


def big_m(instance: Instance) -> float:
    """Bounds every time difference, every resource term and the successor
    count differences (at most ``2n``)."""
    H = instance.horizon
    scale = max(1.0, instance.capacity, float(instance.rate_upper.max()))
    return max(H * scale, 2.0 * instance.n)


def milp_counts(n: int, k: int, with_max_window: int | None = None) -> dict:
    """Closed-form row and column counts per family."""
    N, m = (k + 1) * n, 2 * n
    rows = {
        "event_order": N * (N - 1), "deadline": n, "release": n,
        "requirement": n, "lower_bound": n * m * (m - 1),
        "upper_bound": n * m * (m - 1), "zero_finish": n * m,
        "zero_start": n * m, "interval_capacity": m * (m - 1),
        "exclusive_order": N * (N - 1) // 2, "one_successor_1": m * (m - 1),
        "one_successor_2": m * (m - 1), "total_successors": 1,
        "max_window": n if with_max_window is None else with_max_window,
        "min_window": n,
    }
    cols = {"t": N, "p": n * m, "a": N * (N - 1), "b": m * (m - 1)}
    return {"rows": rows, "columns": cols}


@dataclass
class MilpModel:
    text: str
    M: float
    row_counts: dict
    column_counts: dict


def export_milp(instance: Instance) -> MilpModel:
    """Build the MILP in CPLEX LP format."""
    n, k, N, m = instance.n, instance.k, instance.n_events, instance.n_plannable
    M = big_m(instance)
    T = lambda i: f"T{i + 1}"
    Pv = lambda j, i: f"P{j + 1}_{i + 1}"
    A = lambda i, i2: f"A{i + 1}_{i2 + 1}"
    B = lambda i, i2: f"B{i + 1}_{i2 + 1}"
    w = LpWriter()
    w.comments = [f"instance {instance.name or 'unnamed'}: n={n} k={k}",
                  f"big M = {M!r}"]
    counts = dict.fromkeys(FAMILIES, 0)

    def row(family, idx, coeffs, sense, rhs):
        name = PREFIX[family] + "".join(f"_{x + 1}" for x in idx)
        w.add_row(name, {v: c for v, c in coeffs if v is not None}, sense, rhs)
        counts[family] += 1

    def a(i, i2):
        return None if i == i2 else A(i, i2)

    # objective
    for j, job in enumerate(instance.jobs):
        w.objective_constant += job.weights[0]
        for l in range(2, k + 1):
            w.objective[A(instance.jump_event(j, l - 1), 2 * j + 1)] = job.weights[l - 1]

    for i in range(N):
        for i2 in range(N):
            if i != i2:
                row("event_order", (i, i2),
                    [(T(i), 1), (T(i2), -1), (A(i2, i), -M)], "<=", 0)
    for j, job in enumerate(instance.jobs):
        row("deadline", (j,), [(T(2 * j + 1), 1)], "<=", job.deadline)
    for j, job in enumerate(instance.jobs):
        row("release", (j,), [(T(2 * j), 1)], ">=", job.release)
    for j, job in enumerate(instance.jobs):
        row("requirement", (j,), [(Pv(j, i), 1) for i in range(m)], "=",
            job.resource_requirement)
    for j, job in enumerate(instance.jobs):
        lo = job.rate_lower
        for i in range(m):
            for i2 in range(m):
                if i != i2:
                    row("lower_bound", (j, i, i2),
                        [(Pv(j, i), 1), (T(i2), -lo), (T(i), lo),
                         (B(i, i2), -M), (a(2 * j, i2), -M),
                         (a(i, 2 * j + 1), -M)], ">=", -3 * M)
    for j, job in enumerate(instance.jobs):
        hi = job.rate_upper
        for i in range(m):
            for i2 in range(m):
                if i != i2:
                    row("upper_bound", (j, i, i2),
                        [(Pv(j, i), 1), (T(i2), -hi), (T(i), hi),
                         (A(i2, i), -M)], "<=", 0)
    for j in range(n):
        for i in range(m):
            row("zero_finish", (j, i),
                [(Pv(j, i), 1), (a(i, 2 * j + 1), -M)], "<=", 0)
    for j in range(n):
        for i in range(m):
            row("zero_start", (j, i),
                [(Pv(j, i), 1), (a(i, 2 * j), M)], "<=", M)
    P = instance.capacity
    for i in range(m):
        for i2 in range(m):
            if i != i2:
                row("interval_capacity", (i, i2),
                    [(Pv(j, i), 1) for j in range(n)]
                    + [(T(i2), -P), (T(i), P), (A(i2, i), -M)], "<=", 0)
    for i in range(N):
        for i2 in range(i + 1, N):
            row("exclusive_order", (i, i2), [(A(i, i2), 1), (A(i2, i), 1)],
                "=", 1)
    for family, sense, sign in (("one_successor_1", "<=", 1),
                                ("one_successor_2", ">=", -1)):
        for i in range(m):
            for i2 in range(m):
                if i == i2:
                    continue
                coeffs: dict[str, float] = {}
                for i3 in range(m):
                    for src, c in ((i, 1.0), (i2, -1.0)):
                        if src != i3:
                            coeffs[A(src, i3)] = coeffs.get(A(src, i3), 0.0) + c
                coeffs[B(i, i2)] = sign * M
                row(family, (i, i2), list(coeffs.items()), sense, 1 + sign * M)
    row("total_successors", (),
        [(B(i, i2), 1) for i in range(m) for i2 in range(m) if i != i2],
        "=", 2 * n - 1)
    for j, job in enumerate(instance.jobs):
        if job.rate_lower > 0:
            row("max_window", (j,), [(T(2 * j + 1), 1), (T(2 * j), -1)], "<=",
                job.resource_requirement / job.rate_lower)
    for j, job in enumerate(instance.jobs):
        row("min_window", (j,), [(T(2 * j + 1), 1), (T(2 * j), -1)], ">=",
            job.resource_requirement / job.rate_upper)

    for e in range(m, N):
        w.set_bounds(T(e), instance.fixed_times[e], instance.fixed_times[e])
    w.binaries = ([A(i, i2) for i in range(N) for i2 in range(N) if i != i2]
                  + [B(i, i2) for i in range(m) for i2 in range(m) if i != i2])
    cols = {"t": N, "p": n * m, "a": N * (N - 1), "b": m * (m - 1)}
    return MilpModel(w.text(), M, counts, cols)


# -- exact oracle ---------------------------------------------------------------

class OracleLimitError(ValueError):
    """Raised when an instance is too large for exhaustive enumeration."""


@dataclass
class OracleResult:
    feasible: bool
    objective: float | None
    order: EventOrder | None
    schedule: Schedule | None
    orders_enumerated: int
    lp_solves: int

    def to_dict(self) -> dict:
        return {"feasible": self.feasible, "objective": self.objective,
                "order": list(self.order.sequence) if self.order else None,
                "schedule": self.schedule.to_dict() if self.schedule else None,
                "orders_enumerated": self.orders_enumerated,
                "lp_solves": self.lp_solves}


def enumerate_orders(instance: Instance, precedences: np.ndarray | None = None):
    """Every order that keeps the fixed events sorted and respects all
    derived precedences."""
    if precedences is None:
        precedences = precedence_matrix(instance)
    N, n2 = instance.n_events, instance.n_plannable
    fixed = list(instance.fixed_sequence)
    preds = [set(np.nonzero(precedences[:, e])[0].tolist()) for e in range(N)]
    for a, b in zip(fixed, fixed[1:]):
        preds[b].add(a)
    placed = [False] * N
    seq: list[int] = []

    def dfs():
        if len(seq) == N:
            yield EventOrder(seq)
            return
        for e in range(N):
            if placed[e] or any(not placed[p] for p in preds[e]):
                continue
            placed[e] = True
            seq.append(e)
            yield from dfs()
            seq.pop()
            placed[e] = False

    yield from dfs()


def brute_force_optimum(instance: Instance, limit_n: int = 3,
                        eps: float = 1e-6) -> OracleResult:
    """Minimum base cost over all orders whose LP has zero violation."""
    if instance.n > limit_n:
        raise OracleLimitError(
            f"instance has {instance.n} jobs; oracle limit is {limit_n}")
    orders = list(enumerate_orders(instance))
    costs = [base_cost(o, instance) for o in orders]
    solves = 0
    for idx in sorted(range(len(orders)), key=costs.__getitem__):
        order = orders[idx]
        if simple_bounds_cold(instance, order).total > eps:
            continue
        solves += 1
        sol = LpModel(instance, order, check=False).solve()
        if sol.feasible and sol.objective <= eps:
            return OracleResult(True, costs[idx], order, sol.schedule,
                                len(orders), solves)
    return OracleResult(False, None, None, None, len(orders), solves)
