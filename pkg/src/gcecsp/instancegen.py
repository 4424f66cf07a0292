"""Seeded random instances with sorted incremental weights and jump points.

Stream order for a given seed: base job properties for all jobs, then per
job (in id order) its weights followed by its jump points.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import Instance, InstanceError, Job, save_instance

MAX_WEIGHT = 5.0
GRID_N = (5, 10, 15, 20, 30, 50)
GRID_K = (2, 3, 4)
GRID_SEEDS = 4


@dataclass(frozen=True)
class GenConfig:
    """Generator parameters.

    The base-property rules (requirement range, capacity, utilisation,
    window shape, rate-bound ranges) are tunable; defaults give
    contended but usually feasible instances.
    """
    n: int
    k: int
    seed: int = 0
    capacity: float = 50.0
    requirement_range: tuple[float, float] = (10.0, 80.0)
    utilization: float = 0.4
    release_fraction: float = 0.6
    window_fraction: float = 0.4
    min_window_factor: float = 1.5
    lower_rate_fraction: tuple[float, float] = (0.1, 0.25)
    max_retries: int = 100

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.k < 2:
            raise ValueError("k must be >= 2")


def generate_weights(rng: np.random.Generator, k: int) -> np.ndarray:
    """Incremental weights whose cumulative sums are sorted draws in [0, 5]."""
    first = rng.uniform(0.0, MAX_WEIGHT)
    rest = rng.uniform(first, MAX_WEIGHT, size=k - 1)
    return incremental(np.concatenate([[first], rest]))


def incremental(values) -> np.ndarray:
    s = np.sort(np.asarray(values, dtype=float))
    return np.diff(s, prepend=0.0)


def generate_jump_points(rng: np.random.Generator, job: Job, k: int) -> np.ndarray:
    lo = job.release + job.resource_requirement / job.rate_upper
    if lo >= job.deadline:
        return np.full(k - 1, job.deadline)
    return np.sort(rng.uniform(lo, job.deadline, size=k - 1))


def _base_jobs(rng: np.random.Generator, cfg: GenConfig) -> list[Job]:
    P = cfg.capacity
    E = rng.uniform(*cfg.requirement_range, size=cfg.n)
    horizon = E.sum() / (cfg.utilization * P)
    jobs = []
    for j in range(cfg.n):
        min_len = cfg.min_window_factor * E[j] / P
        max_len = max(cfg.window_fraction * horizon, 2 * min_len)
        r = rng.uniform(0.0, cfg.release_fraction * horizon)
        length = rng.uniform(min_len, max_len)
        rate_min = E[j] / length
        p_max = rng.uniform(rate_min, min(P, 2 * rate_min))
        p_min = rng.uniform(*cfg.lower_rate_fraction) * p_max
        jobs.append(Job(j, float(E[j]), float(r), float(r + length),
                        float(p_min), float(p_max)))
    return jobs


def generate_instance(config: GenConfig) -> Instance:
    """Deterministic instance for ``config``; retries on invariant failure."""
    rng = np.random.default_rng(config.seed)
    last_error = None
    for _ in range(config.max_retries):
        base = _base_jobs(rng, config)
        jobs = []
        for job in base:
            w = generate_weights(rng, config.k)
            K = generate_jump_points(rng, job, config.k)
            jobs.append(Job(job.id, job.resource_requirement, job.release,
                            job.deadline, job.rate_lower, job.rate_upper,
                            tuple(float(x) for x in K),
                            tuple(float(x) for x in w)))
        try:
            return Instance(config.capacity, tuple(jobs), config.k,
                            name=f"n{config.n}_k{config.k}_s{config.seed}")
        except InstanceError as exc:
            last_error = exc
    raise InstanceError(
        f"no valid instance after {config.max_retries} attempts: {last_error}")


def grid_configs(ns=GRID_N, ks=GRID_K, seeds=GRID_SEEDS, base_seed=0):
    for n, k, s in itertools.product(ns, ks, range(seeds)):
        yield GenConfig(n=n, k=k, seed=base_seed + s)


def write_grid(out_dir: str | Path, ns=GRID_N, ks=GRID_K, seeds=GRID_SEEDS,
               base_seed=0) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for cfg in grid_configs(ns, ks, seeds, base_seed):
        inst = generate_instance(cfg)
        path = out / f"{inst.name}.json"
        save_instance(inst, path)
        paths.append(path)
    return paths
