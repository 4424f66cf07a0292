"""Command-line interface.

Every option can also be set through an environment variable prefixed with
``GCECSP_``: global options as ``GCECSP_SEED``, ``GCECSP_EPS``,
``GCECSP_TIME_BUDGET``, ``GCECSP_WORKERS``, ``GCECSP_OUT``; subcommand
options as ``GCECSP_<COMMAND>_<OPTION>``, e.g. ``GCECSP_RUN_VARIANT``.
"""
from __future__ import annotations

import json
import sys
from dataclasses import dataclass
from pathlib import Path

import click

from . import experiments as ex
from .instancegen import GenConfig, generate_instance, write_grid
from .milp import OracleLimitError, brute_force_optimum, export_milp
from .model import (EventOrder, InstanceError, Schedule, StructuralError,
                    InvalidOrderError, load_instance, save_instance,
                    validate_schedule)
from .search import SaConfig, Variant, run_search, write_trace_csv

VARIANTS = [v.value for v in Variant]


@dataclass
class Globals:
    seed: int
    eps: float
    time_budget: float | None
    workers: int
    out: str | None


def _load(path):
    try:
        return load_instance(path)
    except (OSError, InstanceError) as exc:
        raise click.ClickException(str(exc)) from exc


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        click.echo(text, nl=not text.endswith("\n"))


@click.group(context_settings={"auto_envvar_prefix": "GCECSP",
                               "help_option_names": ["-h", "--help"]})
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--eps", type=float, default=1e-6, show_default=True,
              help="Feasibility tolerance.")
@click.option("--time-budget", type=float, default=None,
              help="Wall-clock limit per search in seconds.")
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--out", type=click.Path(), default=None,
              help="Output file (or directory for generate --grid and batch).")
@click.pass_context
def main(ctx, seed, eps, time_budget, workers, out):
    """Hybrid annealing/LP solver for step-wise cost resource scheduling."""
    ctx.obj = Globals(seed, eps, time_budget, workers, out)


@main.command()
@click.option("--n", "n", type=int, default=5, show_default=True)
@click.option("--k", "k", type=int, default=3, show_default=True)
@click.option("--grid", is_flag=True, help="Write the full n/k/seed grid.")
@click.option("--utilization", type=float, default=GenConfig.utilization,
              show_default=True)
@click.pass_obj
def generate(g: Globals, n, k, grid, utilization):
    """Generate a random instance (JSON) or a grid of them."""
    if grid:
        paths = write_grid(g.out or "instances", base_seed=g.seed)
        click.echo(f"wrote {len(paths)} instances to {g.out or 'instances'}")
        return
    inst = generate_instance(GenConfig(n=n, k=k, seed=g.seed,
                                       utilization=utilization))
    if g.out:
        save_instance(inst, g.out)
    else:
        click.echo(inst.to_json())


def _config(g: Globals, variant, max_iterations, **kw) -> SaConfig:
    return SaConfig(variant=Variant(variant), seed=g.seed, eps=g.eps,
                    time_budget=g.time_budget, max_iterations=max_iterations,
                    **{k: v for k, v in kw.items() if v is not None})


@main.command()
@click.argument("instance", type=click.Path())
@click.option("--variant", type=click.Choice(VARIANTS), default="SA-LP",
              show_default=True)
@click.option("--trace", type=click.Path(), default=None,
              help="Write the improvement trace CSV here.")
@click.option("--max-iterations", type=int, default=None)
@click.option("--t-init-factor", type=float, default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--alpha-period-factor", type=float, default=None)
@click.option("--penalty", type=float, default=None)
@click.pass_obj
def run(g: Globals, instance, variant, trace, max_iterations, t_init_factor,
        alpha, alpha_period_factor, penalty):
    """Run one search and print the result JSON."""
    inst = _load(instance)
    try:
        cfg = _config(g, variant, max_iterations, T_init_factor=t_init_factor,
                      alpha=alpha, alpha_period_factor=alpha_period_factor,
                      violation_penalty=penalty)
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from exc
    res = run_search(inst, cfg)
    if trace:
        write_trace_csv(res, trace)
    _emit(json.dumps(res.to_dict(), indent=2), g.out)


@main.command()
@click.argument("directory", type=click.Path(exists=True, file_okay=False))
@click.option("--variant", "variants", type=click.Choice(VARIANTS),
              multiple=True, help="Repeatable; defaults to SA-LP, SA-MIX, SA-2PHASE.")
@click.option("--seeds", type=int, default=1, show_default=True,
              help="Seeds per cell, starting at --seed.")
@click.option("--max-iterations", type=int, default=None)
@click.option("--from-runs", type=click.Path(exists=True), default=None,
              help="Recompute the summary from an existing runs CSV.")
@click.pass_obj
def batch(g: Globals, directory, variants, seeds, max_iterations, from_runs):
    """Run every instance in DIRECTORY with each variant; write runs.csv and
    summary.csv to --out (default: DIRECTORY)."""
    out = Path(g.out or directory)
    out.mkdir(parents=True, exist_ok=True)
    if from_runs:
        rows = ex.read_runs_csv(from_runs)
    else:
        paths = sorted(Path(directory).glob("*.json"))
        base = _config(g, "SA-LP", max_iterations)
        configs = ex.configs_for(variants or ("SA-LP", "SA-MIX", "SA-2PHASE"),
                                 range(g.seed, g.seed + seeds), base)
        rows = ex.run_batch(paths, configs, g.workers)
        ex.write_csv(rows, ex.RUN_COLUMNS, out / "runs.csv")
    summary = ex.summarize(rows)
    ex.write_csv(summary, ex.SUMMARY_COLUMNS, out / "summary.csv")
    for s in summary:
        click.echo(f"n={s['n']:<4} {s['approach']:<12} feas {s['feas']}/{s['runs']}"
                   f"  best {s['best']}/{s['runs']}  dist {s['dist']}")
    failed = sum(1 for r in rows if r.get("error"))
    if failed:
        click.echo(f"{failed} run(s) failed; see the error column", err=True)


@main.command("bench-estimators")
@click.argument("instance", type=click.Path())
@click.option("--length", type=int, default=1000, show_default=True)
@click.pass_obj
def bench_estimators(g: Globals, instance, length):
    """Time LP, flow estimate and simple bounds along a random walk."""
    inst = _load(instance)
    rows = ex.bench_estimators(inst, length, g.seed)
    if g.out:
        ex.write_csv(rows, ex.BENCH_COLUMNS, g.out)
    else:
        ex.write_csv(rows, ex.BENCH_COLUMNS, sys.stdout)
    rep = ex.correlation_report(rows)
    times = ex.mean_times(rows)
    fmt = lambda v: "n/a" if v is None else f"{v:.3f}"
    click.echo(f"spearman flow vs lp: {fmt(rep['flow'])}", err=True)
    click.echo(f"spearman bounds vs lp: {fmt(rep['bounds'])}", err=True)
    if rows:
        click.echo("mean seconds: " + ", ".join(f"{k}={v:.2e}"
                                                 for k, v in times.items()), err=True)


@main.command("export-milp")
@click.argument("instance", type=click.Path())
@click.option("-o", "output", type=click.Path(), default=None)
@click.pass_obj
def export_milp_cmd(g: Globals, instance, output):
    """Write the full MILP in CPLEX LP format."""
    model = export_milp(_load(instance))
    _emit(model.text, output or g.out)


@main.command()
@click.argument("instance", type=click.Path())
@click.option("--limit-n", type=int, default=3, show_default=True)
@click.pass_obj
def oracle(g: Globals, instance, limit_n):
    """Exact optimum by enumerating every event order (tiny instances)."""
    try:
        res = brute_force_optimum(_load(instance), limit_n, g.eps)
    except OracleLimitError as exc:
        raise click.ClickException(str(exc)) from exc
    _emit(json.dumps(res.to_dict(), indent=2), g.out)


@main.command()
@click.argument("instance", type=click.Path())
@click.argument("result", type=click.Path(exists=True), required=False)
@click.pass_obj
def validate(g: Globals, instance, result):
    """Validate an instance, and optionally a run or oracle result JSON
    holding an order and schedule. Exit code 1 if a check fails."""
    inst = _load(instance)
    if result is None:
        click.echo(f"instance ok: n={inst.n} k={inst.k}")
        return
    data = json.loads(Path(result).read_text())
    order = data.get("best_order", data.get("order"))
    if order is None or data.get("schedule") is None:
        raise click.ClickException("result holds no feasible schedule")
    try:
        report = validate_schedule(inst, EventOrder(order),
                                   Schedule.from_dict(data["schedule"]), g.eps)
    except (StructuralError, InvalidOrderError) as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(json.dumps(report.to_dict(), indent=2))
    if not report.passed:
        sys.exit(1)


if __name__ == "__main__":
    main()
