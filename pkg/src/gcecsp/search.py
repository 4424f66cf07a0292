"""Simulated annealing over event orders.

The genotype is an :class:`EventOrder`; each candidate is scored as its
order-determined base cost plus a violation penalty obtained from the LP or
from the simple lower bounds, depending on the variant. The Metropolis
uniform is drawn before anything is evaluated so that candidates whose base
cost alone exceeds the acceptance threshold are rejected without computing
a penalty.
"""
from __future__ import annotations

import csv
import heapq
import math
import time
from collections import deque
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .estimators import BoundCaches, instance_feasibility_flow
from .lp import DEFAULT_PENALTY, LpModel, LpSolution, move_limits
from .model import (EventOrder, Instance, Move, Schedule, jumps_passed,
                    precedence_matrix, validate_schedule)


class Variant(str, Enum):
    SA_LP = "SA-LP"
    SA_MIX = "SA-MIX"
    SA_2PHASE = "SA-2PHASE"
    SA_LP_NAIVE = "SA-LP-NAIVE"


@dataclass(frozen=True)
class SaConfig:
    """Search parameters.

    ``T_init = T_init_factor * n`` and the temperature is multiplied by
    ``alpha`` every ``alpha_period_factor * n`` iterations. The search stops
    once the lowest current score has not improved for one cooling period,
    or on the optional wall-clock and iteration limits.

    Attributes
    ----------
    single_move_prob : float
        Probability of a one-position relocation; otherwise the distance is
        ``1 + Geometric(multi_success)`` capped at ``ceil(N/4)``.
    restarts, restart_moves : int
        Experimental restart hook: after stagnation, perturb the best order
        by ``restart_moves`` random moves and continue, ``restarts`` times.
    audit : bool
        Solve the LP for pre-rejected candidates and count any that the full
        evaluation would have accepted.
    """
    variant: Variant = Variant.SA_LP
    T_init_factor: float = 0.2
    alpha: float = 0.95
    alpha_period_factor: float = 16.0
    violation_penalty: float = DEFAULT_PENALTY
    tabu_length: int = 1
    single_move_prob: float = 0.6
    multi_success: float = 0.5
    max_resample: int = 50
    seed: int = 0
    time_budget: float | None = None
    max_iterations: int | None = None
    eps: float = 1e-6
    restarts: int = 0
    restart_moves: int = 10
    audit: bool = False
    record_decisions: bool = False

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        for name in ("T_init_factor", "alpha_period_factor",
                     "violation_penalty", "multi_success"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.single_move_prob <= 1.0:
            raise ValueError("single_move_prob must lie in [0, 1]")
        if self.tabu_length < 0:
            raise ValueError("tabu_length must be >= 0")


@dataclass
class Counters:
    iterations: int = 0
    lp_solves: int = 0
    bound_evals: int = 0
    pre_rejections: int = 0
    accepted: int = 0
    rejected: int = 0
    phase_switches: int = 0
    post_switch_bound_evals: int = 0
    audit_solves: int = 0
    audit_failures: int = 0
    validation_failures: int = 0


@dataclass
class BestUpdate:
    iteration: int
    time: float
    objective: float
    lp_confirmed: bool


@dataclass
class SearchState:
    instance: Instance
    config: SaConfig
    lp: LpModel
    caches: BoundCaches
    precedences: np.ndarray
    current_base: float
    current_penalty: float
    temperature: float
    phase: int = 1
    tabu: deque = field(default_factory=deque)
    record_low: float = math.inf
    since_improvement: int = 0
    best_objective: float | None = None
    best_order: EventOrder | None = None
    best_schedule: Schedule | None = None
    counters: Counters = field(default_factory=Counters)
    best_updates: list = field(default_factory=list)
    decisions: bytearray = field(default_factory=bytearray)

    @property
    def current_score(self) -> float:
        return self.current_base + self.current_penalty

    @property
    def positions(self) -> np.ndarray:
        return self.lp.positions

    @property
    def order(self) -> EventOrder:
        return self.lp.order


@dataclass
class RunResult:
    """Outcome of one search run.

    ``objective`` is set iff an LP-verified feasible order was found.
    ``trace`` holds ``(time, iteration, best)`` for every best-known update.
    """
    instance: str
    approach: str
    seed: int
    flow_feasible: bool
    wall_time: float
    objective: float | None
    feasible: bool
    initial_score: float
    initial_base: float
    iterations: int
    stop_reason: str
    counters: dict
    trace: list
    best_order: list | None = None
    schedule: dict | None = None
    final_temperature: float = 0.0
    best_updates: list = field(default_factory=list)
    decisions: bytes = b""

    def to_dict(self) -> dict:
        d = asdict(self)
        d["wall_time"] = round(self.wall_time, 2)
        d["decisions"] = self.decisions.decode("ascii")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> RunResult:
        d = dict(d)
        d["decisions"] = d.get("decisions", "").encode("ascii")
        d["trace"] = [tuple(x) for x in d["trace"]]
        return cls(**d)

    def write_trace(self, path: str | Path) -> None:
        write_trace_csv(self, path)


TRACE_COLUMNS = ("time", "iteration", "best", "wall_time_fraction",
                 "normalized_gap")


def write_trace_csv(result: RunResult, path: str | Path) -> None:
    """Improvement trace; the gap is relative to the final best."""
    final = result.objective
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for t, it, best in result.trace:
            frac = t / result.wall_time if result.wall_time > 0 else 0.0
            gap = (best - final) / max(abs(final), 1e-12) if final else 0.0
            w.writerow([f"{t:.6f}", it, f"{best:.9g}", f"{frac:.6f}",
                        f"{gap:.6f}"])


# -- initial solution -----------------------------------------------------------

def reference_times(instance: Instance) -> np.ndarray:
    """Start at its release, completion at its first jump point or deadline,
    whichever is earlier, but no earlier than the minimum duration allows."""
    ref = instance.fixed_times.copy()
    for j, job in enumerate(instance.jobs):
        first = job.jump_points[0] if job.jump_points else job.deadline
        ref[2 * j] = job.release
        ref[2 * j + 1] = max(min(first, job.deadline),
                             job.release + job.min_duration)
    return ref


def initial_solution(instance: Instance,
                     precedences: np.ndarray | None = None) -> EventOrder:
    """Deterministic greedy order.

    Events are taken in order of reference time, then kind (completion,
    fixed, start) and id, subject to every derived precedence and to the
    fixed-time chain. Precedences strictly increase the earliest feasible
    event time, so the graph is acyclic and the sort always completes.
    """
    if precedences is None:
        precedences = precedence_matrix(instance)
    N, n2 = instance.n_events, instance.n_plannable
    ref = reference_times(instance)
    rank = np.where(np.arange(N) >= n2, 1, np.where(np.arange(N) % 2, 0, 2))
    preds = precedences.sum(axis=0).astype(int)
    fixed = list(instance.fixed_sequence)
    for a, b in zip(fixed, fixed[1:]):
        if not precedences[a, b]:
            preds[b] += 1
    chain_next = dict(zip(fixed, fixed[1:]))
    heap = [(ref[e], rank[e], e) for e in range(N) if preds[e] == 0]
    heapq.heapify(heap)
    seq = []
    while heap:
        _, _, e = heapq.heappop(heap)
        seq.append(e)
        succ = list(np.nonzero(precedences[e])[0])
        nxt = chain_next.get(e)
        if nxt is not None and not precedences[e, nxt]:
            succ.append(nxt)
        for b in succ:
            preds[b] -= 1
            if preds[b] == 0:
                heapq.heappush(heap, (ref[b], rank[b], int(b)))
    if len(seq) != N:
        raise RuntimeError("precedence graph has a cycle")
    return EventOrder(seq)


# -- moves --------------------------------------------------------------------

def _valid_dst(state_pos, precedences, e, dst, N) -> bool:
    if not 0 <= dst < N:
        return False
    lo, hi = move_limits(precedences, state_pos, e)
    return lo < dst < hi


def propose_move(state: SearchState, rng: np.random.Generator) -> Move | None:
    """Random valid relocation of a plannable event, or ``None`` if none exists.

    Tabu events are skipped unless no other event has a valid shift.
    """
    inst, cfg = state.instance, state.config
    N, n2 = inst.n_events, inst.n_plannable
    pos = state.positions
    tabu = set(state.tabu)
    candidates = [e for e in range(n2) if e not in tabu] or list(range(n2))
    cap = max(2, math.ceil(N / 4))
    single = rng.random() < cfg.single_move_prob
    kind = "single" if single else "multi"
    for _ in range(cfg.max_resample):
        e = candidates[int(rng.integers(len(candidates)))]
        step = 1 if single else min(1 + int(rng.geometric(cfg.multi_success)), cap)
        direction = 1 if rng.random() < 0.5 else -1
        src = int(pos[e])
        dst = src + direction * step
        if _valid_dst(pos, state.precedences, e, dst, N):
            return Move(e, src, dst, kind)
    def shifts(events):
        return [Move(e, int(pos[e]), int(pos[e]) + d, "fallback")
                for e in events for d in (-1, 1)
                if _valid_dst(pos, state.precedences, e, int(pos[e]) + d, N)]
    # tabu events only when nothing else can move
    options = shifts(candidates) or shifts(sorted(tabu))
    if not options:
        return None
    return options[int(rng.integers(len(options)))]


def random_walk(instance: Instance, order: EventOrder, steps: int,
                rng: np.random.Generator, precedences=None):
    """Yield ``(move, order)`` for a walk of valid one-position shifts."""
    if precedences is None:
        precedences = precedence_matrix(instance)
    seq = list(order.sequence)
    pos = np.array(order.positions)
    N, n2 = instance.n_events, instance.n_plannable
    for _ in range(steps):
        options = [(e, d) for e in range(n2) for d in (-1, 1)
                   if _valid_dst(pos, precedences, e, int(pos[e]) + d, N)]
        if not options:
            return
        e, d = options[int(rng.integers(len(options)))]
        src = int(pos[e])
        move = Move(e, src, src + d)
        other = seq[src + d]
        seq[src], seq[src + d] = other, e
        pos[e], pos[other] = src + d, src
        yield move, EventOrder(seq)


# -- evaluation -----------------------------------------------------------------

def _base_of(state: SearchState, job: int) -> float:
    return float(state.instance.cumulative_weights[
        job, jumps_passed(state.instance, state.positions, job)])


def _solve(state: SearchState) -> LpSolution:
    state.counters.lp_solves += 1
    return state.lp.solve()


def _bounds(state: SearchState) -> float:
    state.counters.bound_evals += 1
    if state.phase == 2:
        state.counters.post_switch_bound_evals += 1
    return state.caches.estimate().total


def _apply(state: SearchState, move: Move) -> None:
    state.lp.apply(move, check=False)
    if state.config.variant in (Variant.SA_MIX, Variant.SA_2PHASE):
        state.caches.apply(move)


def _switch_phase(state: SearchState, move: Move) -> None:
    """Leave the bound phase: rescore the current order with the LP."""
    state.phase = 2
    state.counters.phase_switches += 1
    _apply(state, move.inverse())
    state.current_penalty = _solve(state).objective
    _apply(state, move)
    state.record_low = state.current_score
    state.since_improvement = 0


def evaluate(state: SearchState, move: Move, rng: np.random.Generator):
    """Score ``move`` against a pre-drawn Metropolis threshold.

    Returns ``(accepted, base, penalty, solution)``; the move is applied to
    the state when accepted and undone otherwise. ``penalty`` is ``None``
    for a pre-rejection.
    """
    cfg = state.config
    u = 1.0 - rng.random()
    threshold = state.current_score + state.temperature * math.log(1.0 / u)
    job = move.event // 2
    old_job_base = _base_of(state, job)
    _apply(state, move)
    base = state.current_base - old_job_base + _base_of(state, job)
    variant = cfg.variant
    solution = None
    if variant is not Variant.SA_LP_NAIVE and base > threshold:
        state.counters.pre_rejections += 1
        if cfg.audit:
            state.counters.audit_solves += 1
            if base + state.lp.solve().objective <= threshold:
                state.counters.audit_failures += 1
        _apply(state, move.inverse())
        return False, base, None, None
    if variant in (Variant.SA_LP, Variant.SA_LP_NAIVE) or state.phase == 2:
        solution = _solve(state)
        penalty = solution.objective
    else:
        penalty = _bounds(state)
        if penalty <= cfg.eps:
            if variant is Variant.SA_2PHASE:
                _switch_phase(state, move)
                threshold = (state.current_score
                             + state.temperature * math.log(1.0 / u))
            solution = _solve(state)
            penalty = solution.objective
    if base + penalty <= threshold:
        return True, base, penalty, solution
    _apply(state, move.inverse())
    return False, base, penalty, solution


# -- main loop ------------------------------------------------------------------

def _record_best(state: SearchState, solution: LpSolution, base: float,
                 t: float) -> None:
    cfg = state.config
    if solution is None or not solution.feasible or solution.objective > cfg.eps:
        return
    if state.best_objective is not None and base >= state.best_objective:
        return
    order = state.order
    report = validate_schedule(state.instance, order, solution.schedule,
                               eps=max(cfg.eps, 1e-6))
    if not report.passed:
        state.counters.validation_failures += 1
        return
    state.best_objective = base
    state.best_order = order
    state.best_schedule = solution.schedule
    state.best_updates.append(BestUpdate(state.counters.iterations, t, base, True))


def _initial_penalty(state: SearchState) -> tuple[float, LpSolution | None]:
    cfg = state.config
    if cfg.variant in (Variant.SA_LP, Variant.SA_LP_NAIVE):
        sol = _solve(state)
        return sol.objective, sol
    pen = _bounds(state)
    if pen > cfg.eps:
        return pen, None
    if cfg.variant is Variant.SA_2PHASE:
        state.phase = 2
        state.counters.phase_switches += 1
    sol = _solve(state)
    return sol.objective, sol


def _perturb(state: SearchState, rng: np.random.Generator) -> None:
    """Restart from the best order after a few random moves."""
    target = state.best_order or state.order
    state.lp = LpModel(state.instance, target, cfg_penalty(state),
                       cfg_penalty(state), check=False)
    state.caches = BoundCaches(state.instance, target, cfg_penalty(state),
                               cfg_penalty(state))
    for _ in range(state.config.restart_moves):
        move = propose_move(state, rng)
        if move is None:
            break
        _apply(state, move)
    state.current_base = sum(_base_of(state, j)
                             for j in range(state.instance.n))
    if state.config.variant in (Variant.SA_LP, Variant.SA_LP_NAIVE) \
            or state.phase == 2:
        state.current_penalty = _solve(state).objective
    else:
        state.current_penalty = _bounds(state)
    state.record_low = state.current_score
    state.since_improvement = 0
    state.tabu.clear()


def cfg_penalty(state: SearchState) -> float:
    return state.config.violation_penalty


def init_state(instance: Instance, config: SaConfig,
               initial: EventOrder | None = None
               ) -> tuple[SearchState, LpSolution | None]:
    """Search state at the initial order, scored per the variant.

    Also returns the LP solution of the initial order when one was computed.
    """
    prec = precedence_matrix(instance)
    order = initial or initial_solution(instance, prec)
    L = config.violation_penalty
    state = SearchState(
        instance, config, LpModel(instance, order, L, L),
        BoundCaches(instance, order, L, L), prec,
        current_base=0.0, current_penalty=0.0,
        temperature=config.T_init_factor * instance.n,
        tabu=deque(maxlen=max(config.tabu_length, 1)))
    state.current_base = sum(_base_of(state, j) for j in range(instance.n))
    state.current_penalty, sol = _initial_penalty(state)
    return state, sol


def run_search(instance: Instance, config: SaConfig | None = None,
               initial: EventOrder | None = None) -> RunResult:
    """Run one seeded annealing search and return its best LP-verified result."""
    cfg = config or SaConfig()
    clock = time.monotonic
    t0 = clock()
    rng = np.random.default_rng(cfg.seed)
    n = instance.n
    state, sol = init_state(instance, cfg, initial)
    initial_base, initial_score = state.current_base, state.current_score
    _record_best(state, sol, state.current_base, clock() - t0)
    state.record_low = state.current_score
    period = max(1, int(round(cfg.alpha_period_factor * n)))
    restarts_left = cfg.restarts
    stop = "stagnation"
    while True:
        if cfg.time_budget is not None and clock() - t0 >= cfg.time_budget:
            stop = "time_budget"
            break
        if cfg.max_iterations is not None and state.counters.iterations >= cfg.max_iterations:
            stop = "max_iterations"
            break
        if state.since_improvement > period:
            if restarts_left > 0:
                restarts_left -= 1
                _perturb(state, rng)
                continue
            break
        move = propose_move(state, rng)
        if move is None:
            stop = "no_valid_move"
            break
        state.counters.iterations += 1
        accepted, base, penalty, solution = evaluate(state, move, rng)
        if cfg.record_decisions:
            state.decisions.append(ord("A") if accepted else ord("R"))
        if accepted:
            state.counters.accepted += 1
            state.current_base, state.current_penalty = base, penalty
            if cfg.tabu_length > 0:
                state.tabu.append(move.event)
            _record_best(state, solution, base, clock() - t0)
        else:
            state.counters.rejected += 1
        if state.current_score < state.record_low - 1e-9 * max(1.0, abs(state.record_low)):
            state.record_low = state.current_score
            state.since_improvement = 0
        else:
            state.since_improvement += 1
        if state.counters.iterations % period == 0:
            state.temperature *= cfg.alpha
    wall = clock() - t0
    best = state.best_objective
    return RunResult(
        instance=instance.name, approach=cfg.variant.value, seed=cfg.seed,
        flow_feasible=instance_feasibility_flow(instance), wall_time=wall,
        objective=best, feasible=best is not None,
        initial_score=initial_score, initial_base=initial_base,
        iterations=state.counters.iterations, stop_reason=stop,
        counters=asdict(state.counters),
        trace=[(u.time, u.iteration, u.objective) for u in state.best_updates],
        best_order=list(state.best_order.sequence) if state.best_order else None,
        schedule=state.best_schedule.to_dict() if state.best_schedule else None,
        final_temperature=state.temperature,
        best_updates=[asdict(u) for u in state.best_updates],
        decisions=bytes(state.decisions))
