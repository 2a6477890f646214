"""Capture the flag with double-integrator agents.

Red defends the flag on the left and attacks the one on the right. Agents
accelerate freely, velocities are clipped per component, and an agent that
touches an opponent is sent back to its start together with that opponent.
The first team to bring any agent within the capture radius of the opposing
flag wins (+1 for the winners, -1 for the losers); simultaneous captures and
timeouts are draws.

The per-step math runs on plain floats: the agent count is tiny and numpy
call overhead would dominate.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from ..dynamic import Controller, DynamicGameSpec
from ..metagame import RoleStrategy, induce_role_symmetric_metagame

RED, BLUE = 0, 1
TEAM_NAMES = ("red", "blue")
OFFENSE, DEFENSE = "offense", "defense"
SAMPLING_MODES = ("inverse", "softmax")
FLOOR = 1e-6


def _line(n, x, y0, spacing):
    return tuple((float(x), float(y0 + spacing * (k - (n - 1) / 2))) for k in range(n))


@dataclass(frozen=True)
class CtfConfig:
    """Scenario parameters; ``red_starts``/``blue_starts`` default to a vertical
    line ``start_offset`` units in front of the team's own flag."""

    n_red: int = 3
    n_blue: int = 3
    v_max: tuple = (0.75, 0.75)  # per team, applied per component
    red_flag: tuple = (10.0, 50.0)
    blue_flag: tuple = (90.0, 50.0)
    red_starts: tuple | None = None
    blue_starts: tuple | None = None
    start_offset: float = 10.0
    start_spacing: float = 10.0
    capture_radius: float = 2.0
    collision_radius: float = 1.0
    max_steps: int = 500
    offense_gains: tuple = (3.0, 0.1)  # (flag attraction, opponent repulsion)
    defense_sampling: str = "inverse"
    softmax_tau: float = 1.0
    samples: int = 10

    def __post_init__(self):
        if self.n_red < 0 or self.n_blue < 0 or self.n_red + self.n_blue == 0:
            raise ValueError("team sizes must be non-negative and not both zero")
        vm = tuple(float(v) for v in self.v_max)
        if len(vm) != 2 or min(vm) <= 0:
            raise ValueError("v_max needs two positive entries (red, blue)")
        object.__setattr__(self, "v_max", vm)
        object.__setattr__(self, "red_flag", tuple(float(v) for v in self.red_flag))
        object.__setattr__(self, "blue_flag", tuple(float(v) for v in self.blue_flag))
        object.__setattr__(self, "offense_gains", tuple(float(v) for v in self.offense_gains))
        for name, n in (("red_starts", self.n_red), ("blue_starts", self.n_blue)):
            v = getattr(self, name)
            if v is not None:
                v = tuple((float(a), float(b)) for a, b in v)
                if len(v) != n:
                    raise ValueError(f"{name} needs {n} positions")
                object.__setattr__(self, name, v)
        if self.defense_sampling not in SAMPLING_MODES:
            raise ValueError(f"defense_sampling must be one of {SAMPLING_MODES}")
        if self.capture_radius <= 0 or self.collision_radius < 0:
            raise ValueError("radii must be positive")
        if self.max_steps < 1 or self.samples < 1:
            raise ValueError("max_steps and samples must be at least 1")
        if self.softmax_tau <= 0:
            raise ValueError("softmax_tau must be positive")

    @property
    def num_agents(self) -> int:
        return self.n_red + self.n_blue

    @property
    def teams(self) -> tuple:
        return tuple(range(self.n_red)), tuple(range(self.n_red, self.num_agents))

    def team_of(self, agent: int) -> int:
        return RED if agent < self.n_red else BLUE

    def starts(self) -> tuple:
        rs = self.red_starts
        if rs is None:
            rs = _line(self.n_red, self.red_flag[0] + self.start_offset, self.red_flag[1], self.start_spacing)
        bs = self.blue_starts
        if bs is None:
            bs = _line(self.n_blue, self.blue_flag[0] - self.start_offset, self.blue_flag[1], self.start_spacing)
        return tuple(rs) + tuple(bs)

    def own_flag(self, agent: int) -> tuple:
        return self.red_flag if self.team_of(agent) == RED else self.blue_flag

    def target_flag(self, agent: int) -> tuple:
        return self.blue_flag if self.team_of(agent) == RED else self.red_flag

    @classmethod
    def from_dict(cls, d: dict) -> "CtfConfig":
        known = {f.name for f in fields(cls)}
        bad = set(d) - known
        if bad:
            raise ValueError(f"unknown ctf keys: {sorted(bad)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: (list(map(list, v)) if isinstance(v, tuple) and v and isinstance(v[0], tuple) else list(v) if isinstance(v, tuple) else v) for k, v in d.items()}


@dataclass(frozen=True)
class CtfState:
    """Positions and velocities as tuples of (x, y); ``winner`` is None while the game runs."""

    pos: tuple
    vel: tuple
    t: int = 0
    winner: str | None = None  # "red", "blue" or "draw"

    @property
    def done(self) -> bool:
        return self.winner is not None


def initial_state(config: CtfConfig) -> CtfState:
    starts = config.starts()
    return CtfState(starts, tuple((0.0, 0.0) for _ in starts), 0, None)


def _clip(v, cap):
    return -cap if v < -cap else cap if v > cap else v


def ctf_step(state: CtfState, controls, config: CtfConfig) -> CtfState:
    """Clip, move, reset colliding opposing pairs, then check captures."""
    if state.done:
        return state
    n = config.num_agents
    starts = config.starts()
    pos, vel = [], []
    for i in range(n):
        cap = config.v_max[config.team_of(i)]
        ux, uy = float(controls[i][0]), float(controls[i][1])
        vx = _clip(state.vel[i][0] + ux, cap)
        vy = _clip(state.vel[i][1] + uy, cap)
        vel.append((vx, vy))
        pos.append((state.pos[i][0] + vx, state.pos[i][1] + vy))
    hit = [False] * n
    r = config.collision_radius
    for i in range(config.n_red):
        for j in range(config.n_red, n):
            if math.hypot(pos[i][0] - pos[j][0], pos[i][1] - pos[j][1]) <= r:
                hit[i] = hit[j] = True
    for i in range(n):
        if hit[i]:
            pos[i] = starts[i]
            vel[i] = (0.0, 0.0)
    t = state.t + 1
    red_cap = any(_dist(pos[i], config.blue_flag) <= config.capture_radius for i in range(config.n_red))
    blue_cap = any(_dist(pos[i], config.red_flag) <= config.capture_radius for i in range(config.n_red, n))
    winner = None
    if red_cap and blue_cap:
        winner = "draw"
    elif red_cap:
        winner = "red"
    elif blue_cap:
        winner = "blue"
    elif t >= config.max_steps:
        winner = "draw"
    return CtfState(tuple(pos), tuple(vel), t, winner)


def _dist(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def _opponents(config: CtfConfig, agent: int) -> range:
    return range(config.n_red, config.num_agents) if config.team_of(agent) == RED else range(config.n_red)


def offense_control(state: CtfState, agent: int, config: CtfConfig) -> np.ndarray:
    """Potential field: pulled to the opposing flag, pushed away from opponents."""
    ka, kr = config.offense_gains
    x, y = state.pos[agent]
    gx, gy = config.target_flag(agent)
    dx, dy = gx - x, gy - y
    d2 = max(dx * dx + dy * dy, FLOOR)
    ux, uy = ka * dx / d2, ka * dy / d2
    for j in _opponents(config, agent):
        ox, oy = x - state.pos[j][0], y - state.pos[j][1]
        o2 = max(ox * ox + oy * oy, FLOOR)
        ux += kr * ox / o2
        uy += kr * oy / o2
    return np.array([ux, uy])


def threat_weights(state: CtfState, agent: int, config: CtfConfig) -> list:
    """Sampling probabilities over opponents from their distance to the defender's flag."""
    fx, fy = config.own_flag(agent)
    d = [math.hypot(state.pos[j][0] - fx, state.pos[j][1] - fy) for j in _opponents(config, agent)]
    if not d:
        return []
    if config.defense_sampling == "inverse":
        w = [1.0 / (v + FLOOR) for v in d]
    else:
        m = min(d)
        w = [math.exp(-(v - m) / config.softmax_tau) for v in d]
    s = sum(w)
    return [v / s for v in w]


def defense_control(state: CtfState, agent: int, config: CtfConfig, rng: np.random.Generator) -> np.ndarray:
    """Head for the midpoint between a sampled opponent and the own flag."""
    opp = list(_opponents(config, agent))
    x, y = state.pos[agent]
    fx, fy = config.own_flag(agent)
    if not opp:
        return np.zeros(2)
    w = threat_weights(state, agent, config)
    r = rng.random()
    acc, pick = 0.0, opp[-1]
    for j, p in zip(opp, w):
        acc += p
        if r < acc:
            pick = j
            break
    ox, oy = state.pos[pick]
    return np.array([0.5 * (ox + fx) - x, 0.5 * (oy + fy) - y])


def terminal_payoffs(state: CtfState, config: CtfConfig) -> np.ndarray:
    """Per-agent payoff: +1 winners, -1 losers, 0 on a draw or while running."""
    out = np.zeros(config.num_agents)
    if state.winner in ("red", "blue"):
        sign = 1.0 if state.winner == "red" else -1.0
        out[: config.n_red] = sign
        out[config.n_red :] = -sign
    return out


def flatten(state: CtfState) -> np.ndarray:
    return np.array([c for p in state.pos for c in p] + [c for v in state.vel for c in v], dtype=float)


def state_labels(config: CtfConfig) -> tuple:
    names = agent_names(config)
    return tuple([f"{a}_{c}" for a in names for c in ("x", "y")] + [f"{a}_v{c}" for a in names for c in ("x", "y")])


def agent_names(config: CtfConfig) -> tuple:
    return tuple([f"red{k}" for k in range(config.n_red)] + [f"blue{k}" for k in range(config.n_blue)])


def build_ctf_spec(config: CtfConfig) -> DynamicGameSpec:
    """Dynamic game whose only nonzero cost is the negated payoff at the end."""
    n = config.num_agents

    def stepper(t, x, us, rng):
        return ctf_step(x, us, config)

    def stage(t, x, us):
        return -terminal_payoffs(x, config)

    return DynamicGameSpec(
        state_dim=4 * n,
        num_players=n,
        control_dims=(2,) * n,
        stepper=stepper,
        stage_cost=stage,
        horizon=config.max_steps,
        is_terminal=lambda x: x.done,
        flatten=flatten,
        state_labels=state_labels(config),
        name="ctf",
    )


def role_strategies(config: CtfConfig) -> tuple:
    """(offense, defense) for every team, in that order."""

    def off(p):
        return Controller(OFFENSE, lambda t, x, rng: offense_control(x, p, config))

    def dfn(p):
        return Controller(DEFENSE, lambda t, x, rng: defense_control(x, p, config, rng))

    strat = (RoleStrategy(OFFENSE, off), RoleStrategy(DEFENSE, dfn))
    return strat, strat


def build_ctf_role_game(config: CtfConfig, seed: int = 0, samples: int | None = None, threads: int = 1, cache=None):
    """Two-role (red, blue) meta-game over team compositions; payoffs are maximized.

    Lowest-index agents of a team take offense. Returns the MetaGame.
    """
    spec = build_ctf_spec(config)
    return induce_role_symmetric_metagame(
        spec,
        role_strategies(config),
        config.teams,
        initial_state(config),
        seed=seed,
        samples=config.samples if samples is None else samples,
        role_names=TEAM_NAMES,
        cache=cache,
        threads=threads,
    )


def team_controllers(config: CtfConfig, offense_counts) -> list:
    """Controllers for one episode given (red offense count, blue offense count)."""
    out = []
    for team, members in enumerate(config.teams):
        for k, p in enumerate(members):
            strat = role_strategies(config)[team][0 if k < offense_counts[team] else 1]
            out.append(strat.make(p))
    return out


def write_positions_csv(config: CtfConfig, states, path):
    """Plot-ready long format: entity, t, x, y (agents, then the two flags once)."""
    names = agent_names(config)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["entity", "t", "x", "y"])
        for s in states:
            for a, (x, y) in zip(names, s.pos):
                w.writerow([a, s.t, repr(float(x)), repr(float(y))])
        w.writerow(["red_flag", 0, repr(config.red_flag[0]), repr(config.red_flag[1])])
        w.writerow(["blue_flag", 0, repr(config.blue_flag[0]), repr(config.blue_flag[1])])


def with_overrides(config: CtfConfig, **kw) -> CtfConfig:
    return replace(config, **{k: v for k, v in kw.items() if v is not None})
