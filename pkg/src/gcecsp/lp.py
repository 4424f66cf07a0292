"""Order-restricted LP with violation variables.

For a fixed event order the LP chooses event times and one consumption
value per (job, interval) and minimises the weighted violation of the rate
bounds and of the capacity. Consumption outside a job's active intervals is
fixed to zero.

Variable layout (``n2 = 2n``)::

    t[i]        i < n2                   plannable event times
    p[j, i]     n2 + j*n2 + i            consumption
    s_minus     n2 + n*n2 + j*n2 + i     lower-bound violation
    s_plus      n2 + 2*n*n2 + j*n2 + i   upper-bound violation
    s_t[i]      n2 + 3*n*n2 + i          capacity violation

Row families and counts (``N = (k+1)n``)::

    order       N        t_i <= t_succ(i), vacuous for the last event
    deadline    n        t_completion(j) <= deadline_j
    release     n        t_start(j) >= release_j
    lower       n*n2     p >= P-_j X (t_succP(i) - t_i) - s_minus
    upper       n*n2     p <= P+_j X (t_succP(i) - t_i) + s_plus
    capacity    n2       sum_j p <= P (t_succP(i) - t_i) + s_t
    demand      n        sum_i p[j, i] = E_j
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .lpformat import LpWriter
from .model import (EventOrder, Instance, InvalidOrderError, Move, Schedule,
                    check_order, interval_structure, precedence_matrix,
                    relocate)

DEFAULT_PENALTY = 5.0


class LpSolveError(RuntimeError):
    """The LP solver failed to return an optimal solution."""


@dataclass
class LpSolution:
    objective: float
    schedule: Schedule | None
    status: str
    violation_totals: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.status == "optimal" and self.objective <= 1e-6


class LpModel:
    """Mutable LP for one event order.

    Parameters
    ----------
    instance : Instance
    order : EventOrder
    bound_penalty, capacity_penalty : float
        Weights of the rate-bound and capacity violation variables.
    check : bool
        Validate the order (including derived precedences) before building.
    """

    def __init__(self, instance: Instance, order: EventOrder,
                 bound_penalty: float = DEFAULT_PENALTY,
                 capacity_penalty: float = DEFAULT_PENALTY,
                 check: bool = True):
        self.instance = instance
        self.bound_penalty = float(bound_penalty)
        self.capacity_penalty = float(capacity_penalty)
        self._precedences = precedence_matrix(instance)
        if check:
            check_order(instance, order, self._precedences)
        self._seq = list(order.sequence)
        self._pos = np.array(order.positions, dtype=np.int64)
        n2 = instance.n_plannable
        self.succ = np.full(instance.n_events, -1, dtype=np.int64)
        self.succ[self._seq[:-1]] = self._seq[1:]
        self.succ_plannable, self.active = interval_structure(instance, order)
        self.rows_touched = 0
        self._n2 = n2

    @property
    def order(self) -> EventOrder:
        return EventOrder(self._seq)

    @property
    def positions(self) -> np.ndarray:
        return self._pos

    @property
    def n_variables(self) -> int:
        n, n2 = self.instance.n, self._n2
        return n2 * (2 + 3 * n)

    def row_counts(self) -> dict[str, int]:
        n, n2, N = self.instance.n, self._n2, self.instance.n_events
        return {"order": N, "deadline": n, "release": n, "lower": n * n2,
                "upper": n * n2, "capacity": n2, "demand": n}

    def variable_counts(self) -> dict[str, int]:
        n, n2 = self.instance.n, self._n2
        return {"t": n2, "p": n * n2, "s_minus": n * n2, "s_plus": n * n2,
                "s_t": n2}

    # -- incremental update -------------------------------------------------

    def apply(self, move: Move, check: bool = True) -> None:
        """Relocate one plannable event and refresh the affected structure.

        Raises :class:`InvalidOrderError` (leaving the model unchanged) when
        the move does not produce a valid order.
        """
        inst = self.instance
        e, a, b = move.event, move.src, move.dst
        if not (0 <= a < len(self._seq) and 0 <= b < len(self._seq)):
            raise InvalidOrderError("move outside the order")
        if self._seq[a] != e:
            raise InvalidOrderError(f"event {e} is not at position {a}")
        if a == b:
            return
        if not inst.is_plannable(e):
            raise InvalidOrderError("fixed-time events cannot be moved")
        if check and not move_is_valid(self._precedences, self._seq,
                                       self._pos, a, b):
            raise InvalidOrderError(f"moving event {e} to {b} breaks a precedence")
        seq, pos = self._seq, self._pos
        n2 = self._n2
        old_prev_p = _plannable_neighbour(seq, a, -1, n2)
        old_next_p = _plannable_neighbour(seq, a, +1, n2)
        relocate(seq, a, b)
        lo, hi = min(a, b), max(a, b)
        for p in range(lo, hi + 1):
            pos[seq[p]] = p
        # full-order successors: old predecessor, e and new predecessor
        for p in {a - 1, a, b - 1, b}:
            if 0 <= p < len(seq):
                self.succ[seq[p]] = seq[p + 1] if p + 1 < len(seq) else -1
        new_prev_p = _plannable_neighbour(seq, b, -1, n2)
        new_next_p = _plannable_neighbour(seq, b, +1, n2)
        sp_ = self.succ_plannable
        if old_prev_p >= 0:
            sp_[old_prev_p] = old_next_p
        sp_[e] = new_next_p
        if new_prev_p >= 0:
            sp_[new_prev_p] = e
        # activity: column of e for all jobs, row of e's job over the span
        j = e // 2
        ps, pc = pos[2 * j], pos[2 * j + 1]
        starts, comps = pos[0:n2:2], pos[1:n2:2]
        self.active[:, e] = (starts <= pos[e]) & (pos[e] < comps)
        touched = inst.n
        for p in range(lo, hi + 1):
            i = seq[p]
            if i < n2:
                self.active[j, i] = ps <= p < pc
                touched += 1
        self.rows_touched = 3 + 2 * touched

    # -- assembly -----------------------------------------------------------

    def matrices(self):
        """Return ``(c, A_ub, b_ub, A_eq, b_eq, lb, ub)`` in canonical order."""
        inst = self.instance
        n, n2, N = inst.n, self._n2, inst.n_events
        V = self.n_variables
        P_off, SM_off, SP_off, ST_off = n2, n2 + n * n2, n2 + 2 * n * n2, n2 + 3 * n * n2
        fixed = inst.fixed_times

        rows, cols, vals = [], [], []
        b_ub = []
        r = 0
        # order rows, keyed by event id
        ev = np.arange(N)
        nxt = self.succ
        a_pl = ev < n2
        b_pl = (nxt >= 0) & (nxt < n2)
        has_next = nxt >= 0
        m = a_pl & has_next
        rows.append(r + ev[m]); cols.append(ev[m]); vals.append(np.ones(m.sum()))
        m = b_pl
        rows.append(r + ev[m]); cols.append(nxt[m]); vals.append(-np.ones(m.sum()))
        rhs = np.zeros(N)
        fb = has_next & ~b_pl
        rhs[fb] += fixed[nxt[fb]]
        fa = has_next & ~a_pl
        rhs[fa] -= fixed[ev[fa]]
        b_ub.append(rhs)
        r += N
        # deadlines and releases
        jobs = np.arange(n)
        rows.append(r + jobs); cols.append(2 * jobs + 1); vals.append(np.ones(n))
        b_ub.append(inst.deadlines.copy())
        r += n
        rows.append(r + jobs); cols.append(2 * jobs); vals.append(-np.ones(n))
        b_ub.append(-inst.releases)
        r += n
        # lower and upper rate bounds, keyed (j, i)
        jj, ii = np.meshgrid(jobs, np.arange(n2), indexing="ij")
        jj, ii = jj.ravel(), ii.ravel()
        act = self.active[jj, ii]
        s_of = self.succ_plannable[ii]
        act_t = act & (s_of >= 0)
        for sign, rate, slack_off in ((-1.0, inst.rate_lower, SM_off),
                                      (1.0, inst.rate_upper, SP_off)):
            row_ids = r + jj * n2 + ii
            rows.append(row_ids); cols.append(P_off + jj * n2 + ii)
            vals.append(np.full(len(jj), sign))
            rows.append(row_ids); cols.append(slack_off + jj * n2 + ii)
            vals.append(np.full(len(jj), -1.0))
            coef = rate[jj[act_t]]
            rows.append(row_ids[act_t]); cols.append(s_of[act_t])
            vals.append(-sign * coef)
            rows.append(row_ids[act_t]); cols.append(ii[act_t])
            vals.append(sign * coef)
            b_ub.append(np.zeros(n * n2))
            r += n * n2
        # capacity, keyed i
        rows.append(r + ii); cols.append(P_off + jj * n2 + ii)
        vals.append(np.ones(len(jj)))
        iv = np.arange(n2)
        rows.append(r + iv); cols.append(ST_off + iv); vals.append(-np.ones(n2))
        sp_i = self.succ_plannable
        m = sp_i >= 0
        rows.append(r + iv[m]); cols.append(sp_i[m])
        vals.append(np.full(m.sum(), -inst.capacity))
        rows.append(r + iv[m]); cols.append(iv[m])
        vals.append(np.full(m.sum(), inst.capacity))
        b_ub.append(np.zeros(n2))
        r += n2

        A_ub = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(r, V))
        A_eq = sp.csr_matrix(
            (np.ones(n * n2), (jj, P_off + jj * n2 + ii)), shape=(n, V))
        b_eq = inst.requirements.copy()

        c = np.zeros(V)
        c[SM_off:ST_off] = self.bound_penalty
        c[ST_off:] = self.capacity_penalty
        lb = np.zeros(V)
        ub = np.full(V, np.inf)
        ub[P_off:SM_off] = np.where(self.active.ravel(), np.inf, 0.0)
        return c, A_ub, np.concatenate(b_ub), A_eq, b_eq, lb, ub

    def solve(self) -> LpSolution:
        return solve_lp(self)

    def variable_names(self) -> list[str]:
        n, n2 = self.instance.n, self._n2
        grid = [(j + 1, i + 1) for j in range(n) for i in range(n2)]
        return ([f"T{i + 1}" for i in range(n2)]
                + [f"P{j}_{i}" for j, i in grid]
                + [f"SM{j}_{i}" for j, i in grid]
                + [f"SP{j}_{i}" for j, i in grid]
                + [f"ST{i + 1}" for i in range(n2)])

    def to_lp_format(self) -> str:
        """Debug dump of the current LP in CPLEX LP format."""
        c, A_ub, b_ub, A_eq, b_eq, lb, ub = self.matrices()
        names = self.variable_names()
        w = LpWriter(comments=[f"order {list(self._seq)}"])
        w.objective = {names[v]: float(c[v]) for v in np.nonzero(c)[0]}
        for prefix, A, b, sense in (("u", A_ub, b_ub, "<="),
                                    ("e", A_eq, b_eq, "=")):
            A = sp.csr_matrix(A)
            for r in range(A.shape[0]):
                lo, hi = A.indptr[r], A.indptr[r + 1]
                coeffs = {names[v]: float(x)
                          for v, x in zip(A.indices[lo:hi], A.data[lo:hi])}
                if coeffs:
                    w.add_row(f"{prefix}{r}", coeffs, sense, b[r])
        for v, name in enumerate(names):
            lo_v = None if np.isneginf(lb[v]) else float(lb[v])
            hi_v = None if np.isposinf(ub[v]) else float(ub[v])
            if (lo_v, hi_v) != (0.0, None):
                w.set_bounds(name, lo_v, hi_v)
        return w.text()


def _plannable_neighbour(seq, p, step, n2) -> int:
    q = p + step
    while 0 <= q < len(seq):
        if seq[q] < n2:
            return seq[q]
        q += step
    return -1


def move_limits(precedences: np.ndarray, pos: np.ndarray, e: int):
    """Positions of the nearest blocking events left and right of ``e``.

    The event can be relocated to any position strictly between the two.
    """
    before = pos[precedences[:, e]]
    after = pos[precedences[e, :]]
    lo = int(before.max()) if len(before) else -1
    hi = int(after.min()) if len(after) else len(pos)
    return lo, hi


def move_is_valid(precedences, seq, pos, src, dst) -> bool:
    e = seq[src]
    lo, hi = move_limits(precedences, pos, e)
    return lo < dst < hi


def build_lp(instance: Instance, order: EventOrder,
             bound_penalty: float = DEFAULT_PENALTY,
             capacity_penalty: float = DEFAULT_PENALTY) -> LpModel:
    return LpModel(instance, order, bound_penalty, capacity_penalty)


def update_lp(model: LpModel, move: Move) -> LpModel:
    model.apply(move)
    return model


def solve_lp(model: LpModel) -> LpSolution:
    """Solve the model with HiGHS (deterministic, single-threaded)."""
    c, A_ub, b_ub, A_eq, b_eq, lb, ub = model.matrices()
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=np.column_stack([lb, ub]), method="highs")
    if res.status == 2:
        return LpSolution(float("inf"), None, "infeasible-structural")
    if res.status != 0:
        coef = np.abs(A_ub.data)
        raise LpSolveError(
            f"LP solve failed with status {res.status} ({res.message}); "
            f"|coef| range [{coef[coef > 0].min():.3g}, {coef.max():.3g}], "
            f"|rhs| max {np.abs(b_ub).max():.3g}")
    return _solution_from_vector(model, res.x, float(res.fun))


def _solution_from_vector(model: LpModel, x: np.ndarray, fun: float) -> LpSolution:
    inst = model.instance
    n, n2 = inst.n, inst.n_plannable
    t = inst.fixed_times.copy()
    t[:n2] = x[:n2]
    blk = n * n2
    p = x[n2:n2 + blk].reshape(n, n2)
    sm = x[n2 + blk:n2 + 2 * blk].reshape(n, n2)
    spl = x[n2 + 2 * blk:n2 + 3 * blk].reshape(n, n2)
    st = x[n2 + 3 * blk:]
    sched = Schedule(t, p.copy(), {"s_minus": sm.copy(), "s_plus": spl.copy(),
                                   "s_t": st.copy()})
    totals = {"lower": float(sm.sum()), "upper": float(spl.sum()),
              "capacity": float(st.sum())}
    return LpSolution(max(fun, 0.0), sched, "optimal", totals)


def lp_penalty(instance: Instance, order: EventOrder,
               bound_penalty: float = DEFAULT_PENALTY,
               capacity_penalty: float = DEFAULT_PENALTY) -> float:
    """Cold build-and-solve convenience wrapper."""
    return solve_lp(build_lp(instance, order, bound_penalty,
                             capacity_penalty)).objective
