"""Decentralized role planning: open-loop, receding-horizon, and a random baseline.

Every robot builds the same meta-game from the same inputs, solves it with the
same deterministic solver, and then realizes only its own marginal. No
communication is needed for the robots to agree on the game.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .dynamic import ControllerSet, DynamicGameSpec
from .metagame import MetaGame, PayoffCache, induce_metagame
from .solvers import SolveResult, SolverConfig, solve

MODES = ("open_loop", "receding_horizon", "random")
PURE_MASS = 1.0 - 1e-6


@dataclass(frozen=True)
class PlannerConfig:
    mode: str = "open_loop"
    k: int = 3
    t_rs: int = 33
    solver: SolverConfig = field(default_factory=SolverConfig)
    seed: int = 0
    samples: int = 1
    threads: int = 1
    # open-loop plans look ahead over the remaining horizon, the last segment
    # absorbing any steps past k * t_rs
    full_horizon: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown planner mode {self.mode!r}, expected one of {MODES}")
        if self.k < 1 or self.t_rs < 1:
            raise ValueError("k and t_rs must be at least 1")
        if self.samples < 1:
            raise ValueError("samples must be at least 1")


@dataclass(frozen=True)
class Segment:
    start: int
    stop: int
    controller_id: str
    realized: bool = True


@dataclass(frozen=True)
class RolePlan:
    """Per-player segments tiling [0, horizon)."""

    horizon: int
    segments: tuple  # per player: tuple of Segment

    def __post_init__(self):
        for i, segs in enumerate(self.segments):
            t = 0
            for s in segs:
                if s.start != t or s.stop <= s.start:
                    raise ValueError(f"player {i}: segments do not tile [0, {self.horizon})")
                t = s.stop
            if t != self.horizon:
                raise ValueError(f"player {i}: segments end at {t}, not {self.horizon}")

    def controller_at(self, player: int, t: int) -> str:
        for s in self.segments[player]:
            if s.start <= t < s.stop:
                return s.controller_id
        raise IndexError(f"time {t} outside the plan")

    def sequence(self, player: int) -> tuple:
        return tuple(s.controller_id for s in self.segments[player])


@dataclass(frozen=True)
class ReplanRecord:
    t: int
    metagame: MetaGame
    result: SolveResult
    chosen: tuple  # per player: strategy index
    seconds: float


def realize_role(result: SolveResult, player: int, seed: int, t: int) -> int:
    """Pick one strategy index from a player's equilibrium marginal.

    A marginal with at least 1 - 1e-6 mass on one strategy returns it;
    otherwise the draw uses a stream keyed by (seed, t, player).
    """
    p = np.asarray(result.profile[player], dtype=float)
    top = int(np.argmax(p))
    if p[top] >= PURE_MASS:
        return top
    rng = np.random.default_rng([int(seed), int(t), int(player)])
    return int(rng.choice(p.size, p=p / p.sum()))


def _plan_from_choice(mg: MetaGame, chosen, t0: int, t_rs: int, horizon: int, realized_first_only: bool):
    segs = []
    for i, si in enumerate(chosen):
        ids = mg.strategy(i, si).controller_ids
        row, t = [], t0
        for j, cid in enumerate(ids):
            if t >= horizon:
                break
            stop = horizon if j == len(ids) - 1 else min(t + t_rs, horizon)
            row.append(Segment(t, stop, cid, realized=(j == 0) or not realized_first_only))
            t = stop
        segs.append(row)
    return segs


def solve_metagame(mg: MetaGame, cfg: PlannerConfig) -> SolveResult:
    return solve(mg.game, cfg.solver)


def plan_open_loop(spec: DynamicGameSpec, gamma: ControllerSet, x0, config: PlannerConfig, cache=None):
    """One meta-game at t = 0, solved once; returns (RolePlan, ReplanRecord)."""
    t_start = time.perf_counter()
    steps = spec.horizon if config.full_horizon else None
    mg = induce_metagame(
        spec, gamma, x0, 0, config.k, config.t_rs, config.seed, config.samples,
        steps=steps, cache=cache, threads=config.threads,
    )
    res = solve_metagame(mg, config)
    chosen = tuple(realize_role(res, i, config.seed, 0) for i in range(spec.num_players))
    segs = _plan_from_choice(mg, chosen, 0, config.t_rs, mg.provenance.steps, False)
    horizon = mg.provenance.steps
    if horizon < spec.horizon:
        # lookahead shorter than the episode: hold the last role to the end
        segs = [row[:-1] + [Segment(row[-1].start, spec.horizon, row[-1].controller_id)] for row in segs]
    rec = ReplanRecord(0, mg, res, chosen, time.perf_counter() - t_start)
    return RolePlan(spec.horizon, tuple(tuple(r) for r in segs)), rec


def step_receding_horizon(spec, gamma, state, t: int, config: PlannerConfig, cache: PayoffCache | None = None):
    """Build and solve the meta-game at a role switch; return first-segment roles.

    Returns (controller ids for [t, t + t_rs), per-player segment fragments, ReplanRecord).
    """
    if t % config.t_rs != 0:
        raise ValueError("replanning time must be a multiple of t_rs")
    t_clock = time.perf_counter()
    mg = induce_metagame(
        spec, gamma, state, t, config.k, config.t_rs, config.seed, config.samples,
        cache=cache, threads=config.threads,
    )
    res = solve_metagame(mg, config)
    chosen = tuple(realize_role(res, i, config.seed, t) for i in range(spec.num_players))
    frag = _plan_from_choice(mg, chosen, t, config.t_rs, t + mg.provenance.steps, True)
    ids = tuple(mg.strategy(i, si).controller_ids[0] for i, si in enumerate(chosen))
    rec = ReplanRecord(t, mg, res, chosen, time.perf_counter() - t_clock)
    return ids, frag, rec


def run_receding_horizon(spec: DynamicGameSpec, gamma: ControllerSet, x0, config: PlannerConfig, seed=0):
    """Closed loop: replan every t_rs steps, apply only the first segment.

    Returns (RolePlan of realized segments, list of ReplanRecord).
    """
    from .dynamic import rollout

    cache = PayoffCache()
    x, t = x0, 0
    realized = [[] for _ in range(spec.num_players)]
    records = []
    while t < spec.horizon:
        if spec.is_terminal is not None and spec.is_terminal(x):
            break
        ids, _, rec = step_receding_horizon(spec, gamma, x, t, config, cache)
        records.append(rec)
        n = min(config.t_rs, spec.horizon - t)
        ctrls = [gamma.get(i, cid) for i, cid in enumerate(ids)]
        seg = rollout(spec, ctrls, x, seed=(int(seed), t), t0=t, steps=n)
        for i, cid in enumerate(ids):
            realized[i].append(Segment(t, t + n, cid))
        x = seg.states[-1]
        t += n
    plan = RolePlan(spec.horizon, tuple(tuple(_merge_tail(r, spec.horizon)) for r in realized))
    return plan, records


def _merge_tail(row, horizon):
    if row and row[-1].stop < horizon:
        last = row[-1]
        row = row[:-1] + [Segment(last.start, horizon, last.controller_id, last.realized)]
    return row


def plan_random(gamma: ControllerSet, horizon: int, t_rs: int, seed: int) -> RolePlan:
    """Uniform i.i.d. controller per player per segment, reproducible per seed."""
    rng = np.random.default_rng([int(seed), 0x52414E44])
    n_seg = -(-horizon // t_rs)
    segs = []
    for i in range(gamma.num_players):
        ids = gamma.ids(i)
        picks = rng.integers(len(ids), size=n_seg)
        segs.append(tuple(Segment(j * t_rs, min((j + 1) * t_rs, horizon), ids[int(p)]) for j, p in enumerate(picks)))
    return RolePlan(horizon, tuple(segs))


def plan_controllers(plan: RolePlan, gamma: ControllerSet) -> list:
    """One time-dispatching controller per player that follows the plan."""
    from .dynamic import Controller

    out = []
    for i in range(gamma.num_players):
        segs = plan.segments[i]
        ctrls = [gamma.get(i, s.controller_id) for s in segs]
        starts = np.array([s.start for s in segs])

        def policy(t, x, rng, ctrls=ctrls, starts=starts):
            j = int(np.searchsorted(starts, t, side="right")) - 1
            return ctrls[max(j, 0)](t, x, rng)

        out.append(Controller(",".join(plan.sequence(i)), policy))
    return out


def write_plan_csv(plan: RolePlan, path, player_names=None):
    names = player_names or [str(i) for i in range(len(plan.segments))]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["player", "segment_start", "segment_stop", "controller_id", "realized"])
        for i, segs in enumerate(plan.segments):
            for s in segs:
                w.writerow([names[i], s.start, s.stop, s.controller_id, int(s.realized)])
