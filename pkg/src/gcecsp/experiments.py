"""Batch runs, result tables and the estimator benchmark.

Per-run CSV columns are listed in ``RUN_COLUMNS``; the summary table is a
pure function of those rows.
"""
from __future__ import annotations

import csv
import math
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from .estimators import flow_estimate, simple_bounds_cold
from .lp import LpModel
from .model import Instance, load_instance
from .search import SaConfig, initial_solution, random_walk, run_search

RUN_COLUMNS = ("instance", "n", "k", "approach", "seed", "flow_feasible",
               "wall_time", "objective", "feasible", "initial_score",
               "iterations", "lp_solves", "pre_rejections", "error")
SUMMARY_COLUMNS = ("n", "approach", "runs", "feas", "best", "dist")
BENCH_COLUMNS = ("step", "lp_time", "flow_time", "bounds_time", "lp_penalty",
                 "flow_est", "bounds_est")
BEST_TOL = 1e-6


# -- batch ----------------------------------------------------------------------

def run_cell(path: str, config: SaConfig) -> dict:
    """One isolated search; failures are reported in the ``error`` column."""
    row = dict.fromkeys(RUN_COLUMNS, "")
    row.update(instance=Path(path).stem, approach=config.variant.value,
               seed=config.seed)
    try:
        inst = load_instance(path)
        row.update(n=inst.n, k=inst.k)
        res = run_search(inst, config)
    except Exception as exc:  # batch continues on any cell failure
        row["error"] = f"{type(exc).__name__}: {exc}"
        return row
    row.update(
        flow_feasible=res.flow_feasible, wall_time=f"{res.wall_time:.2f}",
        objective="" if res.objective is None else repr(res.objective),
        feasible=res.feasible, initial_score=repr(res.initial_score),
        iterations=res.iterations, lp_solves=res.counters["lp_solves"],
        pre_rejections=res.counters["pre_rejections"])
    return row


def _sort_key(row: dict):
    return (str(row["instance"]), str(row["approach"]), int(row["seed"]))


def run_batch(paths, configs, workers: int = 1) -> list[dict]:
    """Run every (instance, config) cell; rows sorted by instance, approach, seed."""
    cells = [(str(p), c) for p in paths for c in configs]
    if workers <= 1:
        rows = [run_cell(p, c) for p, c in cells]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_cell, *zip(*cells)))
    return sorted(rows, key=_sort_key)


def write_csv(rows, columns, path_or_file) -> None:
    if isinstance(path_or_file, (str, Path)):
        with open(path_or_file, "w", newline="") as fh:
            write_csv(rows, columns, fh)
        return
    w = csv.DictWriter(path_or_file, fieldnames=columns, extrasaction="ignore")
    w.writeheader()
    w.writerows(rows)


def read_runs_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _feasible(row) -> bool:
    return str(row["feasible"]) == "True" and str(row["objective"]) != ""


def summarize(rows) -> list[dict]:
    """Table-style summary per (n, approach).

    Runs are compared within each (instance, seed) group: ``best`` counts
    runs that reach the lowest feasible objective of the group, ``dist`` is
    the mean percentage above that objective over feasible runs only.
    """
    groups = defaultdict(list)
    for r in rows:
        groups[(r["instance"], str(r["seed"]))].append(r)
    best_of = {}
    for key, members in groups.items():
        objs = [float(r["objective"]) for r in members if _feasible(r)]
        best_of[key] = min(objs) if objs else None
    acc = defaultdict(lambda: {"runs": 0, "feas": 0, "best": 0, "dists": []})
    for r in rows:
        a = acc[(int(r["n"]) if str(r["n"]) else -1, r["approach"])]
        a["runs"] += 1
        if not _feasible(r):
            continue
        a["feas"] += 1
        obj, best = float(r["objective"]), best_of[(r["instance"], str(r["seed"]))]
        if obj <= best + BEST_TOL * max(1.0, abs(best)):
            a["best"] += 1
        a["dists"].append(100.0 * (obj - best) / best if best > 0 else 0.0)
    out = []
    for (n, approach), a in sorted(acc.items()):
        dist = f"{np.mean(a['dists']):.2f}" if a["dists"] else "-"
        out.append({"n": n, "approach": approach, "runs": a["runs"],
                    "feas": a["feas"], "best": a["best"], "dist": dist})
    return out


# -- estimator benchmark --------------------------------------------------------

def _timed(fn):
    t = time.perf_counter()
    value = fn()
    return time.perf_counter() - t, value


def bench_estimators(instance: Instance, length: int = 1000, seed: int = 0,
                     penalty: float = 5.0) -> list[dict]:
    """Evaluate all three penalty methods along one seeded random walk of
    one-position shifts. The LP is built and solved from scratch each step."""
    rng = np.random.default_rng(seed)
    rows = []
    order = initial_solution(instance)
    for step, (_, order) in enumerate(random_walk(instance, order, length, rng)):
        lp_t, lp_v = _timed(lambda: LpModel(instance, order, penalty, penalty,
                                            check=False).solve().objective)
        fl_t, fl_v = _timed(lambda: flow_estimate(instance, order, penalty,
                                                  penalty).total)
        bd_t, bd_v = _timed(lambda: simple_bounds_cold(instance, order, penalty,
                                                       penalty).total)
        rows.append({"step": step, "lp_time": lp_t, "flow_time": fl_t,
                     "bounds_time": bd_t, "lp_penalty": lp_v,
                     "flow_est": fl_v, "bounds_est": bd_v})
    return rows


def spearman(xs, ys) -> float | None:
    """Rank correlation, or ``None`` when either side has zero variance."""
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    if len(xs) < 2 or np.ptp(xs) == 0 or np.ptp(ys) == 0:
        return None
    rho = spearmanr(xs, ys).statistic
    return None if math.isnan(rho) else float(rho)


def correlation_report(rows) -> dict:
    lp = [r["lp_penalty"] for r in rows]
    return {"flow": spearman([r["flow_est"] for r in rows], lp),
            "bounds": spearman([r["bounds_est"] for r in rows], lp)}


def mean_times(rows) -> dict:
    return {c: float(np.mean([r[c] for r in rows])) if rows else float("nan")
            for c in ("lp_time", "flow_time", "bounds_time")}


def configs_for(variants, seeds, base: SaConfig) -> list[SaConfig]:
    return [replace(base, variant=v, seed=s) for v in variants for s in seeds]
