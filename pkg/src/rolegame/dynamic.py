"""Discrete-time dynamic games and deterministic, seeded rollouts.

A rollout owns one random stream per consumer: stream 0 feeds the stepper and
stream ``i + 1`` feeds player i's controller. All streams derive from the
rollout seed, so replaying the logged controls through the stepper with the
same seed reproduces the states exactly.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np


class RolloutError(RuntimeError):
    def __init__(self, msg, step):
        self.step = step
        super().__init__(f"step {step}: {msg}")


@dataclass(frozen=True)
class Controller:
    """A named state-feedback policy ``policy(t, x, rng) -> u``."""

    id: str
    policy: Callable[[int, Any, np.random.Generator], np.ndarray]

    def __call__(self, t, x, rng):
        return self.policy(t, x, rng)


@dataclass(frozen=True)
class ControllerSet:
    """Ordered controllers available to each player (the role set of that player)."""

    per_player: tuple

    def __post_init__(self):
        pp = tuple(tuple(c) for c in self.per_player)
        for i, ctrls in enumerate(pp):
            if not ctrls:
                raise ValueError(f"player {i} has no controllers")
            ids = [c.id for c in ctrls]
            if len(set(ids)) != len(ids):
                raise ValueError(f"player {i} has duplicate controller ids {ids}")
        object.__setattr__(self, "per_player", pp)

    @property
    def num_players(self) -> int:
        return len(self.per_player)

    def ids(self, player: int) -> tuple:
        return tuple(c.id for c in self.per_player[player])

    def get(self, player: int, cid: str) -> Controller:
        for c in self.per_player[player]:
            if c.id == cid:
                return c
        raise KeyError(f"player {player} has no controller {cid!r}")


def _flat_default(x) -> np.ndarray:
    return np.asarray(x, dtype=float).ravel()


@dataclass(frozen=True)
class DynamicGameSpec:
    """Joint dynamics, stage costs and horizon of an N-player dynamic game.

    ``stage_cost(t, x, us)`` returns the vector of all players' stage costs in
    one call. ``cost_to_go(x)`` is an optional per-player estimate added at the
    end of every rollout; planners use it to score truncated windows and the
    trajectory keeps it apart from the stage-cost log. ``is_terminal(x)`` ends a
    rollout early. ``flatten`` maps a state to a real vector for finiteness
    checks and CSV export.
    """

    state_dim: int
    num_players: int
    control_dims: tuple
    stepper: Callable
    stage_cost: Callable
    horizon: int
    cost_to_go: Callable | None = None
    is_terminal: Callable | None = None
    flatten: Callable = _flat_default
    state_labels: tuple = ()
    name: str = "game"

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if len(self.control_dims) != self.num_players:
            raise ValueError("control_dims needs one entry per player")


@dataclass(frozen=True)
class Trajectory:
    states: tuple
    controls: np.ndarray  # (steps, N, max control dim)
    stage_cost_log: np.ndarray  # (steps + 1, N); last row is the terminal stage
    terminal_costs: np.ndarray  # (N,) cost-to-go at the final state
    seed: Any
    t0: int = 0

    @property
    def steps(self) -> int:
        return len(self.states) - 1


def _streams(seed, n: int) -> list:
    entropy = list(seed) if isinstance(seed, (tuple, list)) else [seed]
    ss = np.random.SeedSequence([int(e) for e in entropy])
    return [np.random.default_rng(s) for s in ss.spawn(n + 1)]


def _check_finite(spec, x, step, what):
    v = spec.flatten(x)
    if not np.all(np.isfinite(v)):
        raise RolloutError(f"non-finite {what}", step)


def rollout(
    spec: DynamicGameSpec,
    controllers: Sequence[Controller],
    x0,
    seed=0,
    t0: int = 0,
    steps: int | None = None,
) -> Trajectory:
    """Simulate from ``x0`` at time ``t0`` for ``steps`` steps (default: to the horizon).

    The final state contributes one more stage cost evaluated with zero controls.
    """
    if len(controllers) != spec.num_players:
        raise ValueError(f"need {spec.num_players} controllers, got {len(controllers)}")
    if steps is None:
        steps = spec.horizon - t0
    if steps < 0:
        raise ValueError("steps must be non-negative")
    rngs = _streams(seed, spec.num_players)
    mdim = max(spec.control_dims)
    _check_finite(spec, x0, t0, "initial state")
    x = x0
    states = [x]
    controls, costs = [], []
    for j in range(steps):
        t = t0 + j
        if spec.is_terminal is not None and spec.is_terminal(x):
            break
        us = []
        for i, c in enumerate(controllers):
            u = np.asarray(c(t, x, rngs[i + 1]), dtype=float)
            if u.shape != (spec.control_dims[i],):
                raise RolloutError(f"controller {c.id!r} returned shape {u.shape}", t)
            if not np.all(np.isfinite(u)):
                raise RolloutError(f"non-finite control from player {i} ({c.id})", t)
            us.append(u)
        costs.append(np.asarray(spec.stage_cost(t, x, us), dtype=float))
        row = np.zeros((spec.num_players, mdim))
        for i, u in enumerate(us):
            row[i, : u.size] = u
        controls.append(row)
        x = spec.stepper(t, x, us, rngs[0])
        _check_finite(spec, x, t + 1, "state")
        states.append(x)
    zeros = [np.zeros(m) for m in spec.control_dims]
    t_end = t0 + len(states) - 1
    costs.append(np.asarray(spec.stage_cost(t_end, x, zeros), dtype=float))
    log = np.array(costs, dtype=float)
    if not np.all(np.isfinite(log)):
        bad = int(np.flatnonzero(~np.isfinite(log).all(axis=1))[0])
        raise RolloutError("non-finite stage cost", t0 + bad)
    ctg = np.zeros(spec.num_players) if spec.cost_to_go is None else np.asarray(spec.cost_to_go(x), float)
    ctrl = np.array(controls) if controls else np.zeros((0, spec.num_players, mdim))
    return Trajectory(tuple(states), ctrl, log, ctg, seed, t0)


def replay(spec: DynamicGameSpec, traj: Trajectory) -> tuple:
    """Re-run the stepper on the logged controls; returns the reproduced states."""
    rngs = _streams(traj.seed, spec.num_players)
    x = traj.states[0]
    out = [x]
    for j in range(traj.steps):
        us = [traj.controls[j, i, : spec.control_dims[i]] for i in range(spec.num_players)]
        x = spec.stepper(traj.t0 + j, x, us, rngs[0])
        out.append(x)
    return tuple(out)


def evaluate_costs(
    traj: Trajectory,
    start: int | None = None,
    stop: int | None = None,
    terminal: bool = True,
    cost_to_go: bool = True,
) -> np.ndarray:
    """Per-player J = sum of stage costs over steps [start, stop).

    ``terminal`` adds the zero-control stage at the final state and
    ``cost_to_go`` adds the planning estimate; both only apply when the range
    runs to the end of the trajectory.
    """
    n = traj.steps
    a = 0 if start is None else start
    b = n if stop is None else stop
    if not 0 <= a <= b <= n:
        raise ValueError("invalid step range")
    total = traj.stage_cost_log[a:b].sum(axis=0)
    if b == n:
        if terminal:
            total = total + traj.stage_cost_log[n]
        if cost_to_go:
            total = total + traj.terminal_costs
    return total


def write_trajectory_csv(spec: DynamicGameSpec, traj: Trajectory, path):
    """One row per step: t, state columns, per-player controls, per-player stage costs.

    The last row holds the final state with empty controls and the terminal stage cost.
    """
    labels = list(spec.state_labels) or [f"x{k}" for k in range(len(spec.flatten(traj.states[0])))]
    ctrl_cols = [f"u{i}_{d}" for i in range(spec.num_players) for d in range(spec.control_dims[i])]
    cost_cols = [f"g{i}" for i in range(spec.num_players)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + labels + ctrl_cols + cost_cols)
        for j, x in enumerate(traj.states):
            row = [traj.t0 + j] + [repr(float(v)) for v in spec.flatten(x)]
            if j < traj.steps:
                row += [repr(float(traj.controls[j, i, d])) for i in range(spec.num_players) for d in range(spec.control_dims[i])]
            else:
                row += [""] * len(ctrl_cols)
            row += [repr(float(v)) for v in traj.stage_cost_log[j]]
            w.writerow(row)


def piecewise(controllers: Sequence[Controller], t_start: int, t_rs: int, name: str | None = None) -> Controller:
    """Controller that runs ``controllers[j]`` during segment j of length ``t_rs``.

    The last controller also covers any steps past the final segment.
    """
    ctrls = tuple(controllers)
    if not ctrls:
        raise ValueError("need at least one controller")
    if t_rs < 1:
        raise ValueError("t_rs must be positive")
    k = len(ctrls)

    def policy(t, x, rng):
        seg = min((t - t_start) // t_rs, k - 1)
        return ctrls[max(seg, 0)](t, x, rng)

    return Controller(name or ",".join(c.id for c in ctrls), policy)
