"""Domain types for the step-wise cost continuous-resource scheduling problem.

Events are identified by 0-based integer ids::

    start(j)       = 2j
    completion(j)  = 2j + 1
    jump(j, l)     = 2n + (k-1)j + (l-1)     for l in 1..k-1

so that ``id + 1`` is the usual 1-based index in which the first ``2n``
indices are the plannable events and the jump points follow job by job.
Resource intervals are identified by the plannable event that opens them.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class InstanceError(ValueError):
    """Raised when instance data violates a model invariant."""


class InvalidOrderError(ValueError):
    """Raised when an event order is structurally invalid for an instance."""


class StructuralError(ValueError):
    """Raised when a schedule does not match the dimensions of its order."""


START, COMPLETION, JUMP = "start", "completion", "jump"


@dataclass(frozen=True)
class Job:
    """A single job.

    ``weights[0]`` is the base cost; ``weights[l]`` is added once the job
    completes strictly after ``jump_points[l-1]``.
    """
    id: int
    resource_requirement: float
    release: float
    deadline: float
    rate_lower: float
    rate_upper: float
    jump_points: tuple[float, ...] = ()
    weights: tuple[float, ...] = (0.0,)

    @property
    def min_duration(self) -> float:
        return self.resource_requirement / self.rate_upper

    @property
    def max_duration(self) -> float:
        return self.resource_requirement / self.rate_lower


@dataclass(frozen=True)
class Event:
    id: int
    kind: str
    job: int
    jump: int = 0
    fixed_time: float | None = None

    @property
    def index(self) -> int:
        """1-based canonical index."""
        return self.id + 1

    @property
    def plannable(self) -> bool:
        return self.kind != JUMP


@dataclass(frozen=True, eq=False)
class Instance:
    capacity: float
    jobs: tuple[Job, ...]
    k: int
    name: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "jobs", tuple(self.jobs))
        _check_instance(self)

    @property
    def n(self) -> int:
        return len(self.jobs)

    @property
    def n_plannable(self) -> int:
        return 2 * self.n

    @property
    def n_fixed(self) -> int:
        return (self.k - 1) * self.n

    @property
    def n_events(self) -> int:
        return (self.k + 1) * self.n

    @property
    def horizon(self) -> float:
        return float(self.deadlines.max())

    @cached_property
    def requirements(self) -> np.ndarray:
        return np.array([j.resource_requirement for j in self.jobs])

    @cached_property
    def releases(self) -> np.ndarray:
        return np.array([j.release for j in self.jobs])

    @cached_property
    def deadlines(self) -> np.ndarray:
        return np.array([j.deadline for j in self.jobs])

    @cached_property
    def rate_lower(self) -> np.ndarray:
        return np.array([j.rate_lower for j in self.jobs])

    @cached_property
    def rate_upper(self) -> np.ndarray:
        return np.array([j.rate_upper for j in self.jobs])

    @cached_property
    def fixed_times(self) -> np.ndarray:
        """Array over all event ids; NaN for plannable events."""
        times = np.full(self.n_events, np.nan)
        for job in self.jobs:
            for l, tau in enumerate(job.jump_points, start=1):
                times[self.jump_event(job.id, l)] = tau
        return times

    @cached_property
    def fixed_sequence(self) -> tuple[int, ...]:
        """Fixed-time event ids sorted by (time, id)."""
        ids = range(self.n_plannable, self.n_events)
        return tuple(sorted(ids, key=lambda e: (self.fixed_times[e], e)))

    @cached_property
    def cumulative_weights(self) -> np.ndarray:
        """(n, k) array; entry [j, m] is the cost after passing m jumps."""
        return np.cumsum([j.weights for j in self.jobs], axis=1)

    def start_event(self, j: int) -> int:
        return 2 * j

    def completion_event(self, j: int) -> int:
        return 2 * j + 1

    def jump_event(self, j: int, l: int) -> int:
        return 2 * self.n + (self.k - 1) * j + (l - 1)

    def is_plannable(self, e: int) -> bool:
        return e < 2 * self.n

    def job_of(self, e: int) -> int:
        if e < 2 * self.n:
            return e // 2
        return (e - 2 * self.n) // (self.k - 1)

    def event(self, e: int) -> Event:
        if not 0 <= e < self.n_events:
            raise IndexError(f"event id {e} out of range")
        if e < 2 * self.n:
            return Event(e, START if e % 2 == 0 else COMPLETION, e // 2)
        j, l = divmod(e - 2 * self.n, self.k - 1)
        return Event(e, JUMP, j, l + 1, float(self.fixed_times[e]))

    def events(self) -> list[Event]:
        return [self.event(e) for e in range(self.n_events)]

    def to_dict(self) -> dict:
        return {
            "P": self.capacity,
            "k": self.k,
            "jobs": [
                {
                    "E": j.resource_requirement,
                    "r": j.release,
                    "deadline": j.deadline,
                    "P_min": j.rate_lower,
                    "P_max": j.rate_upper,
                    "jumps": list(j.jump_points),
                    "weights": list(j.weights),
                }
                for j in self.jobs
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _check_instance(instance: Instance) -> None:
    if instance.n < 1:
        raise InstanceError("instance needs at least one job")
    if instance.k < 1:
        raise InstanceError(f"k must be >= 1, got {instance.k}")
    if not instance.capacity > 0:
        raise InstanceError(f"capacity must be positive, got {instance.capacity}")
    for idx, job in enumerate(instance.jobs):
        tag = f"job {idx}"
        if job.id != idx:
            raise InstanceError(f"{tag}: id {job.id} does not match position")
        values = (job.resource_requirement, job.release, job.deadline,
                  job.rate_lower, job.rate_upper, *job.jump_points,
                  *job.weights)
        if not all(math.isfinite(v) for v in values):
            raise InstanceError(f"{tag}: non-finite value")
        if not job.resource_requirement > 0:
            raise InstanceError(f"{tag}: resource requirement must be > 0")
        if job.release < 0:
            raise InstanceError(f"{tag}: release time must be >= 0")
        if not job.deadline > job.release:
            raise InstanceError(f"{tag}: deadline must exceed release time")
        if not job.rate_lower > 0:
            raise InstanceError(f"{tag}: lower rate bound must be > 0")
        if job.rate_upper < job.rate_lower:
            raise InstanceError(f"{tag}: upper rate bound below lower bound")
        earliest = job.release + job.min_duration
        if earliest > job.deadline:
            raise InstanceError(
                f"{tag}: minimum processing time does not fit the window "
                f"({earliest} > {job.deadline})")
        if len(job.weights) != instance.k:
            raise InstanceError(
                f"{tag}: expected {instance.k} weights, got {len(job.weights)}")
        if len(job.jump_points) != instance.k - 1:
            raise InstanceError(
                f"{tag}: expected {instance.k - 1} jump points, "
                f"got {len(job.jump_points)}")
        if any(w < 0 for w in job.weights):
            raise InstanceError(f"{tag}: weights must be non-negative")
        jumps = job.jump_points
        if any(b < a for a, b in zip(jumps, jumps[1:])):
            raise InstanceError(f"{tag}: jump points must be ascending")
        # closed on both ends, see generator for the sampling interval
        if jumps and (jumps[0] < earliest or jumps[-1] > job.deadline):
            raise InstanceError(
                f"{tag}: jump points must lie in [{earliest}, {job.deadline}]")
    if instance.capacity < max(j.rate_lower for j in instance.jobs):
        raise InstanceError("capacity is below the largest lower rate bound")


def instance_from_dict(data: dict, name: str = "") -> Instance:
    """Build an instance from the JSON layout, validating every invariant."""
    try:
        capacity = float(data["P"])
        k = int(data["k"])
        raw_jobs = data["jobs"]
    except (KeyError, TypeError, ValueError) as exc:
        raise InstanceError(f"malformed instance header: {exc!r}") from exc
    jobs = []
    for idx, raw in enumerate(raw_jobs):
        try:
            jobs.append(Job(
                id=idx,
                resource_requirement=float(raw["E"]),
                release=float(raw["r"]),
                deadline=float(raw["deadline"]),
                rate_lower=float(raw["P_min"]),
                rate_upper=float(raw["P_max"]),
                jump_points=tuple(float(x) for x in raw.get("jumps", ())),
                weights=tuple(float(x) for x in raw["weights"]),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise InstanceError(f"job {idx}: malformed entry ({exc!r})") from exc
    return Instance(capacity=capacity, jobs=tuple(jobs), k=k, name=name)


def load_instance(path: str | Path) -> Instance:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{path}: invalid JSON at line {exc.lineno}") from exc
    try:
        return instance_from_dict(data, name=path.stem)
    except InstanceError as exc:
        raise InstanceError(f"{path}: {exc}") from exc


def example_instance() -> Instance:
    """The bundled three-job example instance."""
    text = resources.files("gcecsp.data").joinpath("example.json").read_text()
    return instance_from_dict(json.loads(text), name="example")


def save_instance(instance: Instance, path: str | Path) -> None:
    Path(path).write_text(instance.to_json() + "\n")


# -- cost functions ---------------------------------------------------------

def cost_at(job: Job, t: float) -> float:
    """Step-wise completion cost. Completing exactly at a jump point still
    costs the pre-jump amount."""
    cost = job.weights[0]
    for tau, w in zip(job.jump_points, job.weights[1:]):
        if t > tau:
            cost += w
    return cost


# -- event orders -------------------------------------------------------------

@dataclass(frozen=True)
class Move:
    """Relocate the event at position ``src`` so that it ends at ``dst``."""
    event: int
    src: int
    dst: int
    kind: str = "single"

    @property
    def distance(self) -> int:
        return abs(self.dst - self.src)

    def inverse(self) -> Move:
        return Move(self.event, self.dst, self.src, self.kind)


def relocate(sequence: list, src: int, dst: int) -> None:
    """In-place relocation used by every incremental structure."""
    e = sequence.pop(src)
    sequence.insert(dst, e)


class EventOrder:
    """Immutable total order over all events of an instance.

    Parameters
    ----------
    sequence : sequence of int
        Event ids in order of occurrence.
    """
    __slots__ = ("_seq", "_pos")

    def __init__(self, sequence: Iterable[int]):
        seq = tuple(int(e) for e in sequence)
        pos = np.full(len(seq), -1, dtype=np.int64)
        for p, e in enumerate(seq):
            if not 0 <= e < len(seq) or pos[e] != -1:
                raise InvalidOrderError("sequence is not a permutation")
            pos[e] = p
        pos.setflags(write=False)
        self._seq = seq
        self._pos = pos

    @property
    def sequence(self) -> tuple[int, ...]:
        return self._seq

    @property
    def positions(self) -> np.ndarray:
        """Read-only array mapping event id to position."""
        return self._pos

    def position_of(self, e: int) -> int:
        return int(self._pos[e])

    def index_at(self, p: int) -> int:
        return self._seq[p]

    def __len__(self) -> int:
        return len(self._seq)

    def __iter__(self):
        return iter(self._seq)

    def __eq__(self, other) -> bool:
        return isinstance(other, EventOrder) and self._seq == other._seq

    def __hash__(self) -> int:
        return hash(self._seq)

    def __repr__(self) -> str:
        return f"EventOrder({list(self._seq)})"

    def moved(self, move: Move) -> EventOrder:
        if self._seq[move.src] != move.event:
            raise InvalidOrderError(
                f"event {move.event} is not at position {move.src}")
        seq = list(self._seq)
        relocate(seq, move.src, move.dst)
        return EventOrder(seq)

    def plannable_sequence(self, instance: Instance) -> list[int]:
        return [e for e in self._seq if e < instance.n_plannable]


def derive_precedences(instance: Instance) -> set[tuple[int, int]]:
    """Provable must-precede pairs ``(a, b)`` (a before b).

    Only pairs whose reversal makes the order structurally infeasible or
    forces a positive violation are returned; ties in time are left free.
    """
    return {(int(a), int(b)) for a, b in zip(*np.nonzero(precedence_matrix(instance)))}


def precedence_matrix(instance: Instance) -> np.ndarray:
    """Boolean matrix ``M`` with ``M[a, b]`` True when a must precede b."""
    n, N = instance.n, instance.n_events
    M = np.zeros((N, N), dtype=bool)
    r, d = instance.releases, instance.deadlines
    dur = instance.requirements / instance.rate_upper
    starts = 2 * np.arange(n)
    comps = starts + 1
    M[starts, comps] = True
    for f in range(instance.n_plannable, N):
        tau = instance.fixed_times[f]
        M[f, starts[tau < r]] = True
        M[f, comps[tau < r + dur]] = True
        M[comps[tau > d], f] = True
        M[starts[tau > d - dur], f] = True
    for j in range(n):
        M[comps[j], starts[d[j] < r]] = True
    return M


def check_order(instance: Instance, order: EventOrder,
                precedences: np.ndarray | None = None) -> None:
    """Raise :class:`InvalidOrderError` unless ``order`` is a valid order.

    Checks the permutation size, fixed-time events sorted by (time, id),
    every start before its completion and, unless ``precedences`` is
    ``False``-like, every derived precedence.
    """
    if len(order) != instance.n_events:
        raise InvalidOrderError(
            f"order has {len(order)} events, instance has {instance.n_events}")
    fixed = [e for e in order if e >= instance.n_plannable]
    if tuple(fixed) != instance.fixed_sequence:
        raise InvalidOrderError("fixed-time events are not in time order")
    pos = order.positions
    for j in range(instance.n):
        if pos[2 * j] > pos[2 * j + 1]:
            raise InvalidOrderError(f"job {j} completes before it starts")
    if precedences is None:
        precedences = precedence_matrix(instance)
    a, b = np.nonzero(precedences)
    bad = pos[a] > pos[b]
    if bad.any():
        i = int(np.argmax(bad))
        raise InvalidOrderError(
            f"derived precedence violated: event {a[i]} must precede {b[i]}")


def is_valid_order(instance: Instance, order: EventOrder,
                   precedences: np.ndarray | None = None) -> bool:
    try:
        check_order(instance, order, precedences)
    except InvalidOrderError:
        return False
    return True


def jumps_passed(instance: Instance, positions: Sequence[int], j: int) -> int:
    """Number of job ``j``'s own jump points positioned before its completion."""
    pc = positions[2 * j + 1]
    first = instance.jump_event(j, 1)
    return sum(1 for l in range(instance.k - 1) if positions[first + l] < pc)


def base_cost(order: EventOrder, instance: Instance) -> float:
    """Objective shared by every feasible schedule that follows ``order``."""
    pos = order.positions
    cw = instance.cumulative_weights
    return float(sum(cw[j, jumps_passed(instance, pos, j)]
                     for j in range(instance.n)))


# -- schedules ----------------------------------------------------------------

@dataclass
class Schedule:
    """Event times plus one consumption value per (job, resource interval).

    Attributes
    ----------
    event_times : ndarray
        Times of all events, indexed by event id (fixed events pinned).
    consumptions : ndarray
        ``(n, 2n)`` array; ``[j, i]`` is the amount job ``j`` consumes in
        the interval opened by plannable event ``i``.
    violations : dict of ndarray
        ``s_minus`` and ``s_plus`` with shape ``(n, 2n)``, ``s_t`` with
        shape ``(2n,)``.
    """
    event_times: np.ndarray
    consumptions: np.ndarray
    violations: dict = field(default_factory=dict)

    def start_times(self) -> np.ndarray:
        return self.event_times[0:self.consumptions.shape[1]:2]

    def completion_times(self) -> np.ndarray:
        return self.event_times[1:self.consumptions.shape[1]:2]

    def to_dict(self) -> dict:
        return {
            "event_times": self.event_times.tolist(),
            "consumptions": self.consumptions.tolist(),
            "violations": {k: np.asarray(v).tolist()
                           for k, v in self.violations.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> Schedule:
        return cls(
            np.asarray(data["event_times"], dtype=float),
            np.asarray(data["consumptions"], dtype=float),
            {k: np.asarray(v, dtype=float)
             for k, v in data.get("violations", {}).items()},
        )


def completion_cost(instance: Instance, schedule: Schedule) -> float:
    """Cost of a schedule evaluated on its completion times."""
    times = schedule.completion_times()
    return float(sum(cost_at(job, times[job.id]) for job in instance.jobs))


def interval_structure(instance: Instance, order: EventOrder):
    """Successor plannable event and activity mask for every interval.

    Returns
    -------
    succ_plannable : ndarray of int
        For each plannable event, the next plannable event in the order,
        or -1 for the last one.
    active : ndarray of bool
        ``(n, 2n)`` mask; job ``j`` is active in interval ``i`` iff its
        start is at or before ``i`` and its completion is after ``i``.
    """
    n2 = instance.n_plannable
    pos = order.positions
    plannable = [e for e in order if e < n2]
    succ = np.full(n2, -1, dtype=np.int64)
    for a, b in zip(plannable, plannable[1:]):
        succ[a] = b
    pi = pos[:n2]
    active = (pi[0::2, None] <= pi[None, :]) & (pi[None, :] < pi[1::2, None])
    return succ, active


@dataclass
class CheckResult:
    passed: bool
    worst: float

    def to_dict(self) -> dict:
        return {"passed": self.passed, "worst": self.worst}


@dataclass
class ValidationReport:
    """Per-constraint result; ``worst`` is the largest violation found."""
    checks: dict[str, CheckResult]
    eps: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def failed(self) -> list[str]:
        return [name for name, c in self.checks.items() if not c.passed]

    def to_dict(self) -> dict:
        return {"passed": self.passed, "eps": self.eps,
                "checks": {k: v.to_dict() for k, v in self.checks.items()}}


def validate_schedule(instance: Instance, order: EventOrder,
                      schedule: Schedule, eps: float = 1e-6) -> ValidationReport:
    """Check a schedule against C1-C6, order monotonicity and pinned times."""
    n, n2, N = instance.n, instance.n_plannable, instance.n_events
    t = np.asarray(schedule.event_times, dtype=float)
    p = np.asarray(schedule.consumptions, dtype=float)
    if t.shape != (N,) or p.shape != (n, n2) or len(order) != N:
        raise StructuralError(
            f"schedule shape {t.shape}/{p.shape} does not match "
            f"{N} events and {n} jobs")
    succ, active = interval_structure(instance, order)
    has_next = succ >= 0
    delta = np.where(has_next, t[np.maximum(succ, 0)] - t[:n2], 0.0)
    delta = np.maximum(delta, 0.0)

    def result(worst):
        worst = float(max(worst, 0.0))
        return CheckResult(worst <= eps, worst)

    E = instance.requirements
    starts, comps = t[0:n2:2], t[1:n2:2]
    seq_times = t[list(order.sequence)]
    fixed_ids = np.arange(n2, N)
    checks = {
        "C1_requirement": result(np.abs(p.sum(axis=1) - E).max()),
        "C2_release": result((instance.releases - starts).max()),
        "C3_deadline": result((comps - instance.deadlines).max()),
        "C4_outside_window": result(
            np.abs(np.where(active, 0.0, p)).max()),
    }
    lo = instance.rate_lower[:, None] * delta[None, :]
    hi = instance.rate_upper[:, None] * delta[None, :]
    c5 = np.where(active, np.maximum(lo - p, p - hi), 0.0)
    checks["C5_rate_bounds"] = result(c5.max())
    used = p.sum(axis=0) - instance.capacity * delta
    checks["C6_capacity"] = result(used.max())
    checks["order_monotone"] = result(
        np.max(seq_times[:-1] - seq_times[1:]) if N > 1 else 0.0)
    checks["nonnegative"] = result(max(-t.min(), -p.min()))
    checks["fixed_times"] = result(
        np.abs(t[fixed_ids] - instance.fixed_times[fixed_ids]).max()
        if len(fixed_ids) else 0.0)
    return ValidationReport(checks, eps)
