"""Cheap penalty estimators for event orders.

Two estimators are provided next to the LP: a max-flow relaxation over the
intervals between consecutive fixed-time events, and three O(n) lower
bounds (rate lower bound, rate upper bound and a cumulative capacity scan).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .lp import DEFAULT_PENALTY
from .model import EventOrder, Instance, InvalidOrderError, Move, relocate

FLOW_TOL = 1e-9


@dataclass
class PenaltyEstimate:
    """Weighted penalty and unweighted violation amounts per category."""
    total: float
    lower: float = 0.0
    upper: float = 0.0
    capacity: float = 0.0

    def to_dict(self) -> dict:
        return {"total": self.total, "lower": self.lower,
                "upper": self.upper, "capacity": self.capacity}


# -- max flow relaxation --------------------------------------------------------

@dataclass
class FlowGraph:
    """Bipartite job/interval network after lower-bound pre-assignment.

    Interval ``q`` spans ``[boundaries[q], boundaries[q+1]]``; the outer
    boundaries are time 0 and the horizon.
    """
    boundaries: np.ndarray
    supply: np.ndarray
    arcs: dict[tuple[int, int], float]
    sink: np.ndarray
    preset_lower: float = 0.0
    preset_capacity: float = 0.0
    preassigned: list[tuple[int, int]] = field(default_factory=list)
    accumulated_preset_penalty: float = 0.0

    def to_networkx(self) -> nx.DiGraph:
        G = nx.DiGraph()
        for j, cap in enumerate(self.supply):
            if cap > 0:
                G.add_edge("s", ("job", j), capacity=float(cap))
        for (j, q), cap in self.arcs.items():
            if cap > 0:
                G.add_edge(("job", j), ("int", q), capacity=float(cap))
        for q, cap in enumerate(self.sink):
            if cap > 0:
                G.add_edge(("int", q), "t", capacity=float(cap))
        return G


def fixed_gaps(instance: Instance, positions) -> np.ndarray:
    """For each plannable event, the number of fixed events before it."""
    fixed_pos = np.sort(np.asarray(positions)[instance.n_plannable:])
    return np.searchsorted(fixed_pos, np.asarray(positions)[:instance.n_plannable])


def build_flow_graph(instance: Instance, order: EventOrder,
                     bound_penalty: float = DEFAULT_PENALTY,
                     capacity_penalty: float = DEFAULT_PENALTY) -> FlowGraph:
    n = instance.n
    taus = instance.fixed_times[list(instance.fixed_sequence)]
    bounds = np.concatenate([[0.0], taus, [instance.horizon]])
    lengths = np.diff(bounds)
    gaps = fixed_gaps(instance, order.positions)
    E = instance.requirements
    supply = E.astype(float).copy()
    sink = instance.capacity * lengths
    arcs = {}
    pre = []
    for j in range(n):
        gs, gc = gaps[2 * j], gaps[2 * j + 1]
        lo, hi = instance.rate_lower[j], instance.rate_upper[j]
        for q in range(gs, gc + 1):
            cap = hi * lengths[q]
            if gs < q < gc:
                amount = lo * lengths[q]
                cap -= amount
                supply[j] -= amount
                sink[q] -= amount
                pre.append((j, q))
            arcs[(j, q)] = cap
    lower_def = float(-supply[supply < 0].sum())
    cap_def = float(-sink[sink < 0].sum())
    supply = np.maximum(supply, 0.0)
    sink = np.maximum(sink, 0.0)
    g = FlowGraph(bounds, supply, arcs, sink, lower_def, cap_def, pre)
    g.accumulated_preset_penalty = (bound_penalty * lower_def
                                    + capacity_penalty * cap_def)
    return g


def max_flow_value(graph: FlowGraph) -> float:
    G = graph.to_networkx()
    if "s" not in G or "t" not in G:
        return 0.0
    return float(nx.maximum_flow_value(G, "s", "t"))


def flow_estimate(instance: Instance, order: EventOrder,
                  bound_penalty: float = DEFAULT_PENALTY,
                  capacity_penalty: float = DEFAULT_PENALTY) -> PenaltyEstimate:
    """Max-flow estimate of the penalty; correlated with, but not bounded
    by, the LP penalty. Zero whenever the order admits a feasible schedule."""
    g = build_flow_graph(instance, order, bound_penalty, capacity_penalty)
    demand = float(g.supply.sum())
    shortage = demand - max_flow_value(g)
    if shortage <= FLOW_TOL * max(1.0, demand):
        shortage = 0.0
    total = g.accumulated_preset_penalty + capacity_penalty * shortage
    return PenaltyEstimate(total, lower=g.preset_lower,
                           capacity=g.preset_capacity + shortage)


def instance_feasibility_flow(instance: Instance) -> bool:
    """Necessary condition for feasibility, independent of any order.

    Jobs may only send resource into the parts of their own window, at most
    ``P+_j`` per time unit, and intervals carry at most ``P`` per time unit.
    """
    points = np.unique(np.concatenate([instance.releases, instance.deadlines]))
    G = nx.DiGraph()
    for j, job in enumerate(instance.jobs):
        G.add_edge("s", ("job", j), capacity=job.resource_requirement)
        for q, (a, b) in enumerate(zip(points, points[1:])):
            if job.release <= a and b <= job.deadline:
                G.add_edge(("job", j), ("int", q),
                           capacity=(b - a) * job.rate_upper)
    for q, (a, b) in enumerate(zip(points, points[1:])):
        G.add_edge(("int", q), "t", capacity=(b - a) * instance.capacity)
    demand = float(instance.requirements.sum())
    value = nx.maximum_flow_value(G, "s", "t")
    return bool(value >= demand - FLOW_TOL * max(1.0, demand))


# -- simple lower bounds ----------------------------------------------------------

def simple_bounds_cold(instance: Instance, order: EventOrder,
                       bound_penalty: float = DEFAULT_PENALTY,
                       capacity_penalty: float = DEFAULT_PENALTY) -> PenaltyEstimate:
    """Single pass over the order computing all three lower bounds."""
    n2 = instance.n_plannable
    E = instance.requirements
    taus = instance.fixed_times
    P = instance.capacity
    horizon = instance.horizon
    last_fixed = None
    left = [None] * n2
    pending = []
    right = [None] * n2
    total = shortage = 0.0
    for e in order:
        if e < n2:
            left[e] = last_fixed
            pending.append(e)
            if e % 2:
                total += E[e // 2]
        else:
            tau = taus[e]
            for x in pending:
                right[x] = tau
            pending.clear()
            last_fixed = tau
            if total > tau * P:
                shortage += total - tau * P
                total = tau * P
    lower = upper = 0.0
    for j in range(instance.n):
        s, c = 2 * j, 2 * j + 1
        if right[s] is not None and left[c] is not None:
            span = max(left[c] - right[s], 0.0)
            lower += max(0.0, span * instance.rate_lower[j] - E[j])
        lo = left[s] if left[s] is not None else 0.0
        hi = right[c] if right[c] is not None else horizon
        upper += max(0.0, E[j] - (hi - lo) * instance.rate_upper[j])
    return PenaltyEstimate(bound_penalty * (lower + upper)
                           + capacity_penalty * shortage,
                           lower, upper, shortage)


class BoundCaches:
    """Incrementally maintained state for the simple lower bounds.

    Each plannable event stores its gap, the number of fixed-time events
    before it, from which the nearest fixed events on either side follow.
    The capacity scan keeps the energy completed in each gap and, per
    fixed event, the clamped running total and the shortage found there.
    """

    def __init__(self, instance: Instance, order: EventOrder,
                 bound_penalty: float = DEFAULT_PENALTY,
                 capacity_penalty: float = DEFAULT_PENALTY):
        self.instance = instance
        self.bound_penalty = bound_penalty
        self.capacity_penalty = capacity_penalty
        self._seq = list(order.sequence)
        self._pos = np.array(order.positions, dtype=np.int64)
        fixed_seq = instance.fixed_sequence
        self._taus = [float(instance.fixed_times[f]) for f in fixed_seq]
        self._fixed = list(fixed_seq)
        self.gap = [int(g) for g in fixed_gaps(instance, self._pos)]
        n, F = instance.n, len(self._taus)
        E = instance.requirements
        self.lower_terms = [self._lower_term(j) for j in range(n)]
        self.upper_terms = [self._upper_term(j) for j in range(n)]
        self.gap_energy = [0.0] * (F + 1)
        for j in range(n):
            self.gap_energy[self.gap[2 * j + 1]] += E[j]
        self.carry = [0.0] * F
        self.shortage = [0.0] * F
        self._rescan(0, F)
        self.lower_total = sum(self.lower_terms)
        self.upper_total = sum(self.upper_terms)
        self.shortage_total = sum(self.shortage)

    @property
    def order(self) -> EventOrder:
        return EventOrder(self._seq)

    @property
    def f_left(self) -> list[int]:
        """Nearest preceding fixed event per plannable event (-1 if none)."""
        return [self._fixed[g - 1] if g > 0 else -1 for g in self.gap]

    @property
    def f_right(self) -> list[int]:
        F = len(self._fixed)
        return [self._fixed[g] if g < F else -1 for g in self.gap]

    def _lower_term(self, j: int) -> float:
        gs, gc = self.gap[2 * j], self.gap[2 * j + 1]
        if gs >= len(self._taus) or gc == 0:
            return 0.0
        span = max(self._taus[gc - 1] - self._taus[gs], 0.0)
        inst = self.instance
        return max(0.0, span * inst.rate_lower[j] - inst.requirements[j])

    def _upper_term(self, j: int) -> float:
        gs, gc = self.gap[2 * j], self.gap[2 * j + 1]
        inst = self.instance
        lo = self._taus[gs - 1] if gs > 0 else 0.0
        hi = self._taus[gc] if gc < len(self._taus) else inst.horizon
        return max(0.0, inst.requirements[j] - (hi - lo) * inst.rate_upper[j])

    def _rescan(self, first: int, settle: int) -> None:
        """Redo the capacity scan from fixed event ``first``; stop once past
        ``settle`` with an unchanged running total."""
        P = self.instance.capacity
        total = self.carry[first - 1] if first > 0 else 0.0
        delta = 0.0
        for q in range(first, len(self._taus)):
            total += self.gap_energy[q]
            cap = self._taus[q] * P
            short = total - cap if total > cap else 0.0
            total = min(total, cap)
            delta += short - self.shortage[q]
            self.shortage[q] = short
            unchanged = total == self.carry[q]
            self.carry[q] = total
            if unchanged and q >= settle:
                break
        if hasattr(self, "shortage_total"):
            self.shortage_total += delta

    def apply(self, move: Move) -> None:
        """Relocate a plannable event; cost linear in the distance moved."""
        e, a, b = move.event, move.src, move.dst
        seq, pos = self._seq, self._pos
        n2 = self.instance.n_plannable
        if not (0 <= a < len(seq) and 0 <= b < len(seq)) or seq[a] != e \
                or e >= n2:
            raise InvalidOrderError(f"invalid move {move}")
        if a == b:
            return
        if b > a:
            crossed = sum(1 for p in range(a + 1, b + 1) if seq[p] >= n2)
        else:
            crossed = -sum(1 for p in range(b, a) if seq[p] >= n2)
        relocate(seq, a, b)
        for p in range(min(a, b), max(a, b) + 1):
            pos[seq[p]] = p
        if crossed == 0:
            return
        old_gap = self.gap[e]
        new_gap = old_gap + crossed
        self.gap[e] = new_gap
        j = e // 2
        lt, ut = self._lower_term(j), self._upper_term(j)
        self.lower_total += lt - self.lower_terms[j]
        self.upper_total += ut - self.upper_terms[j]
        self.lower_terms[j], self.upper_terms[j] = lt, ut
        if e % 2:
            E = self.instance.requirements[j]
            self.gap_energy[old_gap] -= E
            self.gap_energy[new_gap] += E
            lo, hi = min(old_gap, new_gap), max(old_gap, new_gap)
            if lo < len(self._taus):
                self._rescan(lo, hi)

    def estimate(self) -> PenaltyEstimate:
        lower = max(self.lower_total, 0.0)
        upper = max(self.upper_total, 0.0)
        short = max(self.shortage_total, 0.0)
        return PenaltyEstimate(
            self.bound_penalty * (lower + upper) + self.capacity_penalty * short,
            lower, upper, short)


def simple_bounds(instance: Instance, order: EventOrder,
                  caches: BoundCaches | None = None,
                  bound_penalty: float = DEFAULT_PENALTY,
                  capacity_penalty: float = DEFAULT_PENALTY) -> PenaltyEstimate:
    """Lower bound on the LP penalty of ``order``.

    Uses ``caches`` when given (they must describe ``order``), otherwise a
    cold scan.
    """
    if caches is None:
        return simple_bounds_cold(instance, order, bound_penalty,
                                  capacity_penalty)
    return caches.estimate()


def update_caches(caches: BoundCaches, move: Move) -> BoundCaches:
    caches.apply(move)
    return caches
