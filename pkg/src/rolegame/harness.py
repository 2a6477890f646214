"""Run orchestration and artifacts for the bundled scenarios.

A run reads one YAML file::

    scenario: transport          # transport | ctf | nfg_file
    seed: 0
    repeat: 100                  # random-planner baseline only
    planner: {mode: open_loop, k: 3, t_rs: 33}
    solver: {method: replicator, restarts: 4}
    env: {horizon: 100}          # TransportParams or CtfConfig fields
    game: rps.txt                # nfg_file only, relative to the config file

Every artifact is a pure function of the config and seed. Wall-clock times,
thread counts, timestamps and the host name live only under the summary's
``metadata`` key, which determinism checks ignore.
"""
from __future__ import annotations

import csv
import json
import platform
import time
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .dynamic import RolloutError, evaluate_costs, rollout, write_trajectory_csv
from .gameio import load_game
from .games import deviation_payoffs
from .metagame import _map, export_metagame
from .planner import (
    PlannerConfig,
    plan_controllers,
    plan_open_loop,
    plan_random,
    run_receding_horizon,
    write_plan_csv,
)
from .solvers import SolverConfig, solve, write_trace_csv
from .envs import ctf as ctf_env
from .envs import transport as tr_env

SCENARIOS = ("transport", "ctf", "nfg_file")
MODE_ALIASES = {"open": "open_loop", "closed": "receding_horizon", "random": "random"}
TOP_KEYS = {"scenario", "seed", "repeat", "planner", "solver", "env", "game", "name"}


class ConfigError(ValueError):
    """Malformed run configuration; the message names the offending field."""


def bundled(name: str) -> Path:
    """Path of a file shipped in the package data directory."""
    return Path(str(resources.files("rolegame") / "data" / name))


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    env: dict = field(default_factory=dict)
    seed: int = 0
    repeat: int = 1
    game_file: Path | None = None
    name: str = ""

    def resolved_env(self) -> dict:
        """Environment block with every default filled in."""
        if self.scenario == "transport":
            return tr_env.TransportParams.from_dict(self.env).to_dict()
        if self.scenario == "ctf":
            return ctf_env.CtfConfig.from_dict(self.env).to_dict()
        return dict(self.env)

    def echo(self) -> dict:
        """Config as written into the summary; thread count goes to metadata."""
        p = asdict(self.planner)
        p.pop("threads")
        return {
            "scenario": self.scenario,
            "name": self.name,
            "seed": self.seed,
            "repeat": self.repeat,
            "planner": p,
            "env": self.resolved_env(),
            "game": self.game_file.name if self.game_file else None,
        }


def _build(cls, d, where):
    if d is None:
        d = {}
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected a mapping")
    known = {f.name for f in fields(cls)}
    bad = sorted(set(d) - known)
    if bad:
        raise ConfigError(f"{where}: unknown field(s) {', '.join(bad)}")
    try:
        return cls(**d)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from None


def parse_config(doc: dict, base_dir: Path | None = None, **overrides) -> RunConfig:
    """Validate a config mapping; ``overrides`` are CLI flags (None means unset)."""
    if not isinstance(doc, dict):
        raise ConfigError("config: expected a mapping at the top level")
    bad = sorted(set(doc) - TOP_KEYS)
    if bad:
        raise ConfigError(f"config: unknown key(s) {', '.join(bad)}")
    scenario = doc.get("scenario")
    if scenario not in SCENARIOS:
        raise ConfigError(f"scenario: expected one of {SCENARIOS}, got {scenario!r}")
    seed = overrides.get("seed")
    seed = doc.get("seed", 0) if seed is None else seed
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed: expected a non-negative integer")
    repeat = overrides.get("repeat") or doc.get("repeat", 1)
    if not isinstance(repeat, int) or repeat < 1:
        raise ConfigError("repeat: expected a positive integer")
    solver = _build(SolverConfig, doc.get("solver"), "solver")
    pdoc = dict(doc.get("planner") or {})
    if "solver" in pdoc:
        raise ConfigError("planner.solver: put solver settings in the top-level 'solver' block")
    mode = overrides.get("mode")
    if mode is not None:
        pdoc["mode"] = MODE_ALIASES.get(mode, mode)
    elif "mode" in pdoc:
        pdoc["mode"] = MODE_ALIASES.get(pdoc["mode"], pdoc["mode"])
    for key in ("k", "t_rs", "samples", "threads"):
        if overrides.get(key) is not None:
            pdoc[key] = overrides[key]
    planner = _build(PlannerConfig, {**pdoc, "solver": solver, "seed": seed}, "planner")
    env = dict(doc.get("env") or {})
    if scenario == "ctf" and overrides.get("samples") is not None:
        env["samples"] = overrides["samples"]
    try:
        if scenario == "transport":
            tr_env.TransportParams.from_dict(env)
        elif scenario == "ctf":
            ctf_env.CtfConfig.from_dict(env)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"env: {e}") from None
    game_file = None
    if scenario == "nfg_file":
        if "game" not in doc:
            raise ConfigError("game: nfg_file scenarios need a game file")
        game_file = Path(doc["game"])
        if not game_file.is_absolute() and base_dir is not None:
            game_file = base_dir / game_file
        if not game_file.exists():
            raise ConfigError(f"game: file not found: {game_file}")
    return RunConfig(scenario, planner, env, seed, repeat, game_file, str(doc.get("name", "")))


def load_config(path, **overrides) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config: file not found: {path}")
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise ConfigError(f"config: invalid YAML: {e}") from None
    cfg = parse_config(doc, path.parent, **overrides)
    return cfg if cfg.name else replace(cfg, name=path.stem)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, Path):
        return str(x)
    return x


def write_json(doc, path):
    Path(path).write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")


def _metadata(started, threads, extra=None) -> dict:
    md = {
        "started_utc": started.isoformat(),
        "wall_seconds": (datetime.now(timezone.utc) - started).total_seconds(),
        "host": platform.node(),
        "threads": threads,
    }
    md.update(extra or {})
    return md


def _profile_doc(res, mapping=None) -> dict:
    doc = {
        "profile": [list(map(float, p)) for p in res.profile],
        "per_player_regret": list(res.regret.per_player_regret),
        "max_regret": res.regret.max_regret,
        "restart": res.restart,
        "converged": res.converged,
        "iterations": res.iterations_used,
    }
    if mapping is not None:
        doc["strategies"] = [[ms.label for ms in row] for row in mapping]
    return doc


# transport ------------------------------------------------------------------


def write_transport_positions(params, states, path):
    """Long format (entity, t, x, y): rod endpoints then humans, one row each per step."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["entity", "t", "x", "y"])
        for j, s in enumerate(states):
            ends = tr_env.endpoints(s, params.rod_length)
            for k in range(2):
                w.writerow([f"robot{k}", s.t, repr(float(ends[k, 0])), repr(float(ends[k, 1]))])
            for k, (x, y) in enumerate(s.human_pos):
                w.writerow([f"human{k}", s.t, repr(float(x)), repr(float(y))])


def evaluate_transport_plan(params, plan, seed=0):
    """Roll a plan out without the planning cost-to-go; returns (trajectory, metrics)."""
    spec, gamma, x0 = tr_env.build_transport_spec(tr_env.evaluation_params(params))
    traj = rollout(spec, plan_controllers(plan, gamma), x0, seed=seed)
    costs = evaluate_costs(traj, cost_to_go=False)
    metrics = {
        "costs": [float(c) for c in costs],
        "team_cost": tr_env.team_cost(traj, params),
        "success": bool(tr_env.arrived(traj.states[-1], params)),
        "min_human_distance": tr_env.min_human_distance(traj, params),
    }
    return spec, traj, metrics


def _plan_doc(plan) -> list:
    return [[{"start": s.start, "stop": s.stop, "controller": s.controller_id} for s in row] for row in plan.segments]


def run_transport(cfg: RunConfig, out: Path) -> dict:
    params = tr_env.TransportParams.from_dict(cfg.env)
    spec, gamma, x0 = tr_env.build_transport_spec(params)
    pc = cfg.planner
    names = ["robot0", "robot1"]
    artifacts = {}
    replans, seconds = [], []
    if pc.mode == "open_loop":
        plan, rec = plan_open_loop(spec, gamma, x0, pc)
        recs = [rec]
    elif pc.mode == "receding_horizon":
        plan, recs = run_receding_horizon(spec, gamma, x0, pc, seed=cfg.seed)
    else:
        recs = []
        seeds = [cfg.seed + r for r in range(cfg.repeat)]

        def one(s):
            p = plan_random(gamma, params.horizon, pc.t_rs, s)
            return p, evaluate_transport_plan(params, p, seed=s)[2]

        runs = _map(one, seeds, pc.threads)
        with open(out / "random_runs.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["seed", "cost_robot0", "cost_robot1", "team_cost", "success", "min_human_distance"])
            for s, (_, m) in zip(seeds, runs):
                w.writerow([s, repr(m["costs"][0]), repr(m["costs"][1]), repr(m["team_cost"]), int(m["success"]), repr(m["min_human_distance"])])
        artifacts["random_runs"] = "random_runs.csv"
        plan = runs[0][0]
    for rec in recs:
        name = f"metagame_t{rec.t:03d}.game"
        export_metagame(rec.metagame, out / name)
        replans.append({"t": rec.t, "chosen": [rec.metagame.strategy(i, c).label for i, c in enumerate(rec.chosen)], "game": name, **_profile_doc(rec.result)})
        seconds.append(rec.seconds)
    espec, traj, metrics = evaluate_transport_plan(params, plan, seed=cfg.seed)
    write_trajectory_csv(espec, traj, out / "trajectory.csv")
    write_plan_csv(plan, out / "plan.csv", names)
    write_transport_positions(params, traj.states, out / "positions.csv")
    artifacts.update(trajectory="trajectory.csv", plan="plan.csv", positions="positions.csv")
    summary = {
        "scenario": "transport",
        "mode": pc.mode,
        "plan": _plan_doc(plan),
        "replans": replans,
        "artifacts": artifacts,
        **metrics,
    }
    if pc.mode == "random":
        rows = list(csv.DictReader(open(out / "random_runs.csv")))
        summary["first_run"] = dict(metrics)
        summary["costs"] = [float(np.mean([float(r[f"cost_robot{i}"]) for r in rows])) for i in range(2)]
        summary["team_cost"] = float(np.mean([float(r["team_cost"]) for r in rows]))
        summary["success_rate"] = float(np.mean([int(r["success"]) for r in rows]))
    return summary, {"replan_seconds": seconds}


# capture the flag ------------------------------------------------------------


def realize_composition(res, config, seed) -> tuple:
    """Per-agent roles drawn from each team's mixture; pure mixtures are exact."""
    counts = []
    for team, members in enumerate(config.teams):
        p = np.asarray(res.profile[team], dtype=float)
        if p.max() >= 1 - 1e-6:
            counts.append(len(members) if int(np.argmax(p)) == 0 else 0)
            continue
        rng = np.random.default_rng([int(seed), 0x435446, team])
        counts.append(int((rng.random(len(members)) < p[0]).sum()))
    return tuple(counts)


def run_ctf(cfg: RunConfig, out: Path) -> dict:
    config = ctf_env.CtfConfig.from_dict(cfg.env)
    mg = ctf_env.build_ctf_role_game(config, seed=cfg.seed, threads=cfg.planner.threads)
    t0 = time.perf_counter()
    res = solve(mg.game, cfg.planner.solver)
    secs = time.perf_counter() - t0
    export_metagame(mg, out / "metagame.game")
    dev = deviation_payoffs(mg.game, res.profile)
    expected = [float(np.dot(res.profile[r], dev[r])) for r in range(2)]
    counts = realize_composition(res, config, cfg.seed)
    spec = ctf_env.build_ctf_spec(config)
    traj = rollout(spec, ctf_env.team_controllers(config, counts), ctf_env.initial_state(config), seed=(cfg.seed, 0x45504953))
    write_trajectory_csv(spec, traj, out / "trajectory.csv")
    ctf_env.write_positions_csv(config, traj.states, out / "positions.csv")
    summary = {
        "scenario": "ctf",
        "teams": {
            name: {
                "players": len(config.teams[r]),
                "offense_probability": float(res.profile[r][0]),
                "defense_probability": float(res.profile[r][1]),
                "expected_payoff": expected[r],
            }
            for r, name in enumerate(ctf_env.TEAM_NAMES)
        },
        "equilibrium": _profile_doc(res, mg.mapping),
        "episode": {
            "offense_counts": list(counts),
            "winner": traj.states[-1].winner or "running",
            "steps": traj.steps,
        },
        "artifacts": {"game": "metagame.game", "trajectory": "trajectory.csv", "positions": "positions.csv"},
    }
    return summary, {"solve_seconds": secs}


# normal-form files -----------------------------------------------------------


def solve_nfg(path, solver: SolverConfig | None = None, out=None, labels=None) -> dict:
    """Solve a game file; optionally write solution.json (and trace.csv when recorded)."""
    game = load_game(path)
    res = solve(game, solver or SolverConfig())
    doc = {"game": Path(path).name, "method": (solver or SolverConfig()).method, **_profile_doc(res)}
    if hasattr(game, "strategy_sets"):
        doc["strategies"] = [list(s) for s in game.strategy_sets]
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        if res.trace is not None:
            write_trace_csv(res, out / "trace.csv", labels)
            doc["trace"] = "trace.csv"
        write_json(doc, out / "solution.json")
    return doc


def run_nfg(cfg: RunConfig, out: Path) -> dict:
    doc = solve_nfg(cfg.game_file, cfg.planner.solver, out)
    return {"scenario": "nfg_file", **doc, "artifacts": {"solution": "solution.json"}}, {}


# entry points --------------------------------------------------------------


RUNNERS = {"transport": run_transport, "ctf": run_ctf, "nfg_file": run_nfg}


def run(cfg: RunConfig, out) -> dict:
    """Execute one config into directory ``out``; returns the summary (also summary.json).

    A diverging simulation still writes a summary with ``status: failed``.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc)
    try:
        summary, extra = RUNNERS[cfg.scenario](cfg, out)
        summary["status"] = "ok"
    except RolloutError as e:
        summary, extra = {"scenario": cfg.scenario, "status": "failed", "error": str(e)}, {}
    summary["config"] = cfg.echo()
    summary["metadata"] = _metadata(started, cfg.planner.threads, extra)
    write_json(summary, out / "summary.json")
    return summary


def compare(cfgs, out, labels=None) -> list:
    """Run several transport configs and tabulate per-player and team costs per method.

    Writes comparison.csv (rows: quantity; columns: methods) and comparison.json.
    """
    if not cfgs:
        raise ValueError("nothing to compare")
    if len({c.scenario for c in cfgs}) != 1:
        raise ValueError("compare needs configs of a single scenario")
    if cfgs[0].scenario != "transport":
        raise ValueError("compare supports transport runs")
    if len({c.seed for c in cfgs}) != 1:
        raise ValueError("compare needs every config to use the same seed")
    out = Path(out)
    labels = list(labels or [c.name or c.planner.mode for c in cfgs])
    if len(set(labels)) != len(labels):
        labels = [f"{i}_{lab}" for i, lab in enumerate(labels)]
    rows = []
    for cfg, lab in zip(cfgs, labels):
        s = run(cfg, out / lab)
        if s["status"] != "ok":
            raise RolloutError(f"run {lab!r} failed: {s.get('error')}", 0)
        rows.append({"method": lab, "mode": cfg.planner.mode, "cost_robot0": s["costs"][0], "cost_robot1": s["costs"][1], "team_cost": s["team_cost"]})
    with open(out / "comparison.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantity"] + labels)
        for key in ("cost_robot0", "cost_robot1", "team_cost"):
            w.writerow([key] + [repr(float(r[key])) for r in rows])
    write_json({"methods": rows}, out / "comparison.json")
    return rows
