"""Two robots carrying a rigid rod past two potential-field pedestrians.

Unit mass, unit moment of inertia and unit time step. The rod pose is kept as
(midpoint, angle) so the endpoint distance is exactly the rod length.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

from ..dynamic import Controller, ControllerSet, DynamicGameSpec, Trajectory

FLOOR = 1e-6
TIME_PENALTY_MODES = ("until_arrival", "constant")


def _pairs(v):
    return tuple(tuple(float(c) for c in p) for p in v)


@dataclass(frozen=True)
class TransportParams:
    robot_starts: tuple = ((10.0, 10.0), (30.0, 10.0))
    robot_goals: tuple = ((70.0, 80.0), (90.0, 80.0))
    human_starts: tuple = ((10.0, 50.0), (90.0, 10.0))
    # left-to-right mover and bottom-right to top-left mover
    human_goals: tuple = ((90.0, 50.0), (20.0, 80.0))
    v_cap: float = 1.0
    omega_cap: float = 0.05
    # (time, proximity, effort) weights, one triple per robot
    cost_weights: tuple = ((2.0, 50.0, 1.5), (2.0, 50.0, 1.5))
    human_gains: tuple = (20.0, 1.0)
    human_v_cap: float = 0.5
    follower_beta: float = 0.8
    gains: tuple = (1.0, 1.0, 1.0)  # goal, orientation, avoidance
    horizon: int = 100
    # fraction of rod velocity removed each step before forces apply
    rod_damping: float = 0.8
    success_radius: float = 5.0
    time_penalty: str = "until_arrival"
    # planning-only estimate of the remaining time penalty at the window end
    cost_to_go: bool = True

    def __post_init__(self):
        for name in ("robot_starts", "robot_goals", "human_starts", "human_goals", "cost_weights"):
            object.__setattr__(self, name, _pairs(getattr(self, name)))
        object.__setattr__(self, "human_gains", tuple(float(g) for g in self.human_gains))
        object.__setattr__(self, "gains", tuple(float(g) for g in self.gains))
        if len(self.robot_starts) != 2 or len(self.robot_goals) != 2 or len(self.cost_weights) != 2:
            raise ValueError("transport has exactly two robots")
        if len(self.human_starts) != len(self.human_goals):
            raise ValueError("each human needs a start and a goal")
        if any(len(w) != 3 for w in self.cost_weights):
            raise ValueError("cost_weights needs three weights per robot")
        # beta = 0 is accepted as the no-mimic limit
        if not 0 <= self.follower_beta < 1:
            raise ValueError("follower_beta must lie in [0, 1)")
        if min(self.v_cap, self.omega_cap, self.human_v_cap) <= 0:
            raise ValueError("velocity caps must be positive")
        if not 0 <= self.rod_damping < 1:
            raise ValueError("rod_damping must lie in [0, 1)")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.time_penalty not in TIME_PENALTY_MODES:
            raise ValueError(f"time_penalty must be one of {TIME_PENALTY_MODES}")
        if self.success_radius <= 0:
            raise ValueError("success_radius must be positive")

    @property
    def rod_length(self) -> float:
        a, b = np.array(self.robot_starts)
        return float(np.linalg.norm(b - a))

    @classmethod
    def from_dict(cls, d: dict) -> "TransportParams":
        known = {f.name for f in fields(cls)}
        bad = sorted(set(d) - known)
        if bad:
            raise ValueError(f"unknown transport parameter(s): {', '.join(bad)}")
        return cls(**d)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = [list(x) if isinstance(x, tuple) else x for x in v] if isinstance(v, tuple) else v
        return out


@dataclass(frozen=True)
class TransportState:
    rod_mid: np.ndarray
    rod_angle: float
    rod_vel: np.ndarray
    rod_ang_vel: float
    human_pos: np.ndarray  # (H, 2)
    human_vel: np.ndarray  # (H, 2)
    prev_controls: np.ndarray  # (2, 2) forces applied at the previous step
    t: int = 0


def initial_state(params: TransportParams) -> TransportState:
    a, b = np.array(params.robot_starts)
    d = b - a
    h = np.array(params.human_starts, dtype=float).reshape(-1, 2)
    return TransportState(
        rod_mid=(a + b) / 2,
        rod_angle=float(np.arctan2(d[1], d[0])),
        rod_vel=np.zeros(2),
        rod_ang_vel=0.0,
        human_pos=h,
        human_vel=np.zeros_like(h),
        prev_controls=np.zeros((2, 2)),
        t=0,
    )


def endpoints(state: TransportState, length: float) -> np.ndarray:
    """Robot positions: midpoint -/+ half the rod along its direction."""
    e = 0.5 * length * np.array([np.cos(state.rod_angle), np.sin(state.rod_angle)])
    return np.array([state.rod_mid - e, state.rod_mid + e])


def cross2(r, u) -> float:
    return float(r[0] * u[1] - r[1] * u[0])


def point_segment_distance(p, a, b) -> float:
    p, a, b = (np.asarray(v, dtype=float) for v in (p, a, b))
    ab = b - a
    denom = float(ab @ ab)
    s = 0.0 if denom <= 0 else float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + s * ab)))


def human_step(pos, vel, goal, ends, params: TransportParams):
    """Attraction to the goal plus repulsion from both rod endpoints; returns (pos, vel)."""
    pos, vel, goal = (np.asarray(v, dtype=float) for v in (pos, vel, goal))
    g1, g2 = params.human_gains
    dg = goal - pos
    acc = g1 * dg / max(float(dg @ dg), FLOOR)
    for e in ends:
        d = pos - e
        acc = acc + g2 * d / max(float(d @ d), FLOOR)
    cap = params.human_v_cap
    vel = np.clip(vel + acc, -cap, cap)
    return pos + vel, vel


def transport_step(state: TransportState, u1, u2, params: TransportParams) -> TransportState:
    u = np.array([u1, u2], dtype=float)
    if u.shape != (2, 2) or not np.all(np.isfinite(u)):
        raise ValueError("transport_step needs two finite 2-d forces")
    ends = endpoints(state, params.rod_length)
    v = np.clip((1.0 - params.rod_damping) * state.rod_vel + u[0] + u[1], -params.v_cap, params.v_cap)
    mid = state.rod_mid + v
    # torque about the pre-step midpoint, r x F
    tau = sum(cross2(ends[i] - state.rod_mid, u[i]) for i in range(2))
    om = float(np.clip(state.rod_ang_vel + tau, -params.omega_cap, params.omega_cap))
    hp = np.empty_like(state.human_pos)
    hv = np.empty_like(state.human_vel)
    for k in range(len(hp)):
        hp[k], hv[k] = human_step(state.human_pos[k], state.human_vel[k], params.human_goals[k], ends, params)
    return TransportState(mid, state.rod_angle + om, v, om, hp, hv, u, state.t + 1)


def _goal_weight(ends, robot, params) -> float:
    d = float(np.linalg.norm(ends[robot] - np.array(params.robot_goals[robot])))
    return min(1.0, 1.0 / max(d, FLOOR))


def orientation_control(state: TransportState, robot: int, params: TransportParams) -> np.ndarray:
    """PD force perpendicular to the rod that drives the angle back to zero."""
    a = state.rod_angle
    n = np.array([-np.sin(a), np.cos(a)])
    if robot == 0:
        n = -n
    return params.gains[1] * (-a - state.rod_ang_vel) * n


def avoidance_control(state: TransportState, robot: int, params: TransportParams, ends=None) -> np.ndarray:
    ends = endpoints(state, params.rod_length) if ends is None else ends
    tot = np.zeros(2)
    for h in state.human_pos:
        d = ends[robot] - h
        tot += d / max(float(d @ d), FLOOR)
    return params.gains[2] * tot


def leader_control(state: TransportState, robot: int, params: TransportParams) -> np.ndarray:
    ends = endpoints(state, params.rod_length)
    w = _goal_weight(ends, robot, params)
    d = np.array(params.robot_goals[robot]) - ends[robot]
    ug = params.gains[0] * d / max(float(np.linalg.norm(d)), FLOOR)
    return (1 - w) * ug + w * orientation_control(state, robot, params) + avoidance_control(state, robot, params, ends)


def follower_control(state: TransportState, robot: int, params: TransportParams) -> np.ndarray:
    """Copy the other robot's previous force, scaled by beta and by the goal weight."""
    ends = endpoints(state, params.rod_length)
    w = _goal_weight(ends, robot, params)
    mimic = state.prev_controls[1 - robot]
    return (
        w * params.follower_beta * mimic
        + (1 - w) * orientation_control(state, robot, params)
        + avoidance_control(state, robot, params, ends)
    )


def human_distance(state: TransportState, params: TransportParams) -> float:
    """Smallest human-to-rod distance, floored."""
    if len(state.human_pos) == 0:
        return np.inf
    a, b = endpoints(state, params.rod_length)
    return max(min(point_segment_distance(h, a, b) for h in state.human_pos), FLOOR)


def arrived(state: TransportState, params: TransportParams) -> bool:
    ends = endpoints(state, params.rod_length)
    goals = np.array(params.robot_goals)
    return bool(np.all(np.linalg.norm(ends - goals, axis=1) <= params.success_radius))


def shared_stage_cost(state: TransportState, params: TransportParams, robot: int = 0) -> float:
    """Time penalty plus proximity penalty (the part both robots share)."""
    p1, p2, _ = params.cost_weights[robot]
    charge = params.time_penalty == "constant" or not arrived(state, params)
    return (p1 if charge else 0.0) + p2 / human_distance(state, params)


def transport_stage_cost(state: TransportState, u1, u2, params: TransportParams, player: int) -> float:
    u = (u1, u2)[player]
    p3 = params.cost_weights[player][2]
    return shared_stage_cost(state, params, player) + p3 * float(np.linalg.norm(u))


def cost_to_go(state: TransportState, params: TransportParams) -> np.ndarray:
    """Time penalty still owed if both robots drove straight home at full speed."""
    ends = endpoints(state, params.rod_length)
    d = float(np.max(np.linalg.norm(ends - np.array(params.robot_goals), axis=1)))
    left = max(0.0, d - params.success_radius) / params.v_cap
    return np.array([params.cost_weights[i][0] * left for i in range(2)])


def team_cost(traj: Trajectory, params: TransportParams) -> float:
    """Shared cost summed once per step over t = 0..T, effort excluded."""
    return float(sum(shared_stage_cost(x, params) for x in traj.states))


def min_human_distance(traj: Trajectory, params: TransportParams) -> float:
    return float(min(human_distance(x, params) for x in traj.states))


def flatten(state: TransportState) -> np.ndarray:
    return np.concatenate(
        [
            state.rod_mid,
            [state.rod_angle],
            state.rod_vel,
            [state.rod_ang_vel],
            state.human_pos.ravel(),
            state.human_vel.ravel(),
            state.prev_controls.ravel(),
            [float(state.t)],
        ]
    )


def state_labels(params: TransportParams) -> tuple:
    labels = ["rod_x", "rod_y", "rod_angle", "rod_vx", "rod_vy", "rod_omega"]
    n = len(params.human_starts)
    labels += [f"h{k}_{c}" for k in range(n) for c in ("x", "y")]
    labels += [f"h{k}_v{c}" for k in range(n) for c in ("x", "y")]
    labels += [f"prev_u{i}_{c}" for i in range(2) for c in ("x", "y")]
    return tuple(labels + ["step"])


LEADER, FOLLOWER = "leader", "follower"


def build_transport_spec(params: TransportParams | None = None):
    """Returns (spec, controller set, initial state)."""
    params = params or TransportParams()

    def stepper(t, x, us, rng):
        return transport_step(x, us[0], us[1], params)

    def stage(t, x, us):
        shared = [shared_stage_cost(x, params, i) for i in range(2)]
        return np.array([shared[i] + params.cost_weights[i][2] * float(np.linalg.norm(us[i])) for i in range(2)])

    spec = DynamicGameSpec(
        state_dim=len(flatten(initial_state(params))),
        num_players=2,
        control_dims=(2, 2),
        stepper=stepper,
        stage_cost=stage,
        horizon=params.horizon,
        cost_to_go=(lambda x: cost_to_go(x, params)) if params.cost_to_go else None,
        flatten=flatten,
        state_labels=state_labels(params),
        name="transport",
    )
    gamma = ControllerSet(
        tuple(
            (
                Controller(LEADER, lambda t, x, rng, i=i: leader_control(x, i, params)),
                Controller(FOLLOWER, lambda t, x, rng, i=i: follower_control(x, i, params)),
            )
            for i in range(2)
        )
    )
    return spec, gamma, initial_state(params)


def evaluation_params(params: TransportParams) -> TransportParams:
    """Same scenario without the planning cost-to-go, for reporting episode costs."""
    return replace(params, cost_to_go=False)
