"""Command-line interface: ``rolegame solve-nfg|transport|ctf|compare``."""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import harness
from .dynamic import RolloutError
from .gameio import GameFormatError
from .solvers import SolverConfig


def _resolve(path: str) -> Path:
    """A config path, or the name of a bundled file (e.g. ``transport_open.yaml``)."""
    p = Path(path)
    if p.exists():
        return p
    b = harness.bundled(path)
    return b if b.exists() else p


def _fail(msg: str, code: int = 2):
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def _shared(f):
    opts = [
        click.option("--seed", type=int, default=None, help="Override the config seed."),
        click.option("--out", type=click.Path(file_okay=False), default="out", show_default=True, help="Output directory."),
        click.option("--mode", type=click.Choice(["random", "open", "closed"]), default=None, help="Planner mode."),
        click.option("--k", "k", type=int, default=None, help="Number of role segments per plan."),
        click.option("--t-rs", "t_rs", type=int, default=None, help="Steps per role segment."),
        click.option("--samples", type=int, default=None, help="Simulations per profile."),
        click.option("--threads", type=int, default=None, help="Worker threads for profile simulation."),
    ]
    for o in reversed(opts):
        f = o(f)
    return f


def _run_config(path, out, expect, **overrides):
    try:
        cfg = harness.load_config(_resolve(path), **overrides)
    except harness.ConfigError as e:
        _fail(str(e))
    if expect and cfg.scenario != expect:
        _fail(f"scenario: expected {expect!r}, config has {cfg.scenario!r}")
    try:
        summary = harness.run(cfg, out)
    except (ValueError, GameFormatError) as e:
        _fail(str(e))
    brief = {k: summary[k] for k in ("status", "costs", "team_cost", "success", "teams") if k in summary}
    click.echo(json.dumps(harness._jsonable(brief), sort_keys=True))
    if summary["status"] != "ok":
        _fail(summary.get("error", "run failed"), 1)


@click.group()
def main():
    """Role assignment through simulated meta-games."""


@main.command("solve-nfg")
@click.argument("game_file")
@click.option("--method", type=click.Choice(["replicator", "fictitious_play"]), default="replicator", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True, help="Solver seed.")
@click.option("--restarts", type=int, default=4, show_default=True)
@click.option("--max-iters", type=int, default=None, help="Iteration budget (method default if omitted).")
@click.option("--trace/--no-trace", default=False, help="Also write trace.csv.")
@click.option("--out", type=click.Path(file_okay=False), default="out", show_default=True)
def solve_nfg_cmd(game_file, method, seed, restarts, max_iters, trace, out):
    """Solve a game file and write solution.json."""
    try:
        cfg = SolverConfig(method=method, rng_seed=seed, restarts=restarts, max_iters=max_iters, record_trace=trace)
        doc = harness.solve_nfg(_resolve(game_file), cfg, out)
    except (ValueError, FileNotFoundError) as e:
        _fail(str(e))
    click.echo(json.dumps({"profile": doc["profile"], "max_regret": doc["max_regret"]}))


@main.command()
@click.argument("config")
@_shared
def transport(config, seed, out, mode, k, t_rs, samples, threads):
    """Run a collaborative-transport config."""
    _run_config(config, out, "transport", seed=seed, mode=mode, k=k, t_rs=t_rs, samples=samples, threads=threads)


@main.command()
@click.argument("config")
@_shared
def ctf(config, seed, out, mode, k, t_rs, samples, threads):
    """Build and solve a capture-the-flag role game."""
    _run_config(config, out, "ctf", seed=seed, mode=mode, k=k, t_rs=t_rs, samples=samples, threads=threads)


@main.command("compare")
@click.argument("configs", nargs=-1, required=True)
@_shared
def compare_cmd(configs, seed, out, mode, k, t_rs, samples, threads):
    """Run several transport configs and write comparison.csv."""
    try:
        cfgs = [harness.load_config(_resolve(c), seed=seed, mode=mode, k=k, t_rs=t_rs, samples=samples, threads=threads) for c in configs]
        rows = harness.compare(cfgs, out)
    except (ValueError, RolloutError) as e:
        _fail(str(e))
    for r in rows:
        click.echo(f"{r['method']}: robot0 {r['cost_robot0']:.2f}  robot1 {r['cost_robot1']:.2f}  team {r['team_cost']:.2f}")


if __name__ == "__main__":
    main()
