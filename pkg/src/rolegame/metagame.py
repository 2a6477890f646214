"""Meta-games induced by simulating every profile of controller sequences.

Each profile's rollout seed derives only from (base seed, profile key, sample),
so profiles can be evaluated in any order, or concurrently, with identical
results.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .dynamic import Controller, ControllerSet, DynamicGameSpec, RolloutError, evaluate_costs, piecewise, rollout
from .gameio import save_game
from .games import NormalFormGame, RoleSymmetricGame, enumerate_role_profiles


@dataclass(frozen=True)
class MetaStrategy:
    controller_ids: tuple

    def __post_init__(self):
        ids = tuple(str(c) for c in self.controller_ids)
        if not ids:
            raise ValueError("a meta-strategy needs at least one controller")
        object.__setattr__(self, "controller_ids", ids)

    @property
    def label(self) -> str:
        return ",".join(self.controller_ids)

    def __len__(self):
        return len(self.controller_ids)


@dataclass(frozen=True)
class Provenance:
    x0_digest: str
    t_start: int
    t_rs: int
    k: int
    steps: int
    seed: int
    samples: int


@dataclass(frozen=True)
class MetaGame:
    """A finite game plus the map from strategy indices back to controllers."""

    game: object  # NormalFormGame (costs) or RoleSymmetricGame (payoffs)
    mapping: tuple  # per player (or role): tuple of MetaStrategy
    provenance: Provenance
    failed_profiles: tuple = ()

    def strategy(self, player: int, index: int) -> MetaStrategy:
        return self.mapping[player][index]

    def index_of(self, player: int, ms: MetaStrategy) -> int:
        return self.mapping[player].index(ms)


@dataclass(frozen=True)
class RoleStrategy:
    """A strategy shared by all members of a role; ``build(player)`` gives the member's controller."""

    id: str
    build: object

    def make(self, player):
        c = self.build(player)
        if c.id != self.id:
            c = Controller(self.id, c.policy)
        return c


class PayoffCache:
    """Thread-safe store of simulated per-player costs.

    Keys include the state digest, start time and window so that entries from
    different replans never collide.
    """

    def __init__(self):
        self._data = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get(self, key):
        with self._lock:
            v = self._data.get(key)
            if v is None:
                self.misses += 1
            else:
                self.hits += 1
            return v

    def put(self, key, value):
        with self._lock:
            self._data[key] = np.array(value, dtype=float)

    def __len__(self):
        return len(self._data)


def state_digest(spec: DynamicGameSpec, x) -> str:
    v = np.ascontiguousarray(spec.flatten(x), dtype=float)
    return hashlib.sha256(v.tobytes()).hexdigest()[:16]


def profile_seed(seed: int, key, sample: int) -> tuple:
    """Seed entropy for one sample of one profile."""
    return (int(seed),) + tuple(int(k) for k in key) + (int(sample),)


def sequence_space(gamma_i, k: int) -> list:
    """All |gamma_i|^k controller sequences, lexicographic in controller index."""
    if k < 1:
        raise ValueError("k must be at least 1")
    ids = [c if isinstance(c, str) else c.id for c in gamma_i]
    if not ids:
        raise ValueError("empty controller list")
    return [MetaStrategy(tuple(ids[j] for j in combo)) for combo in itertools.product(range(len(ids)), repeat=k)]


def _simulate(spec, ctrls, x0, t_start, steps, seed, key, samples, cache, digest, cost_to_go):
    total = np.zeros(spec.num_players)
    for s in range(samples):
        sd = profile_seed(seed, key, s)
        ckey = (digest, t_start, steps, tuple(c.id for c in ctrls), sd, cost_to_go)
        hit = cache.get(ckey) if cache is not None else None
        if hit is None:
            try:
                traj = rollout(spec, ctrls, x0, seed=sd, t0=t_start, steps=steps)
                hit = evaluate_costs(traj, cost_to_go=cost_to_go)
            except RolloutError:
                hit = np.full(spec.num_players, np.inf)
            if not np.all(np.isfinite(hit)):
                hit = np.full(spec.num_players, np.inf)
            if cache is not None:
                cache.put(ckey, hit)
        total = total + hit
    return total / samples


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def induce_metagame(
    spec: DynamicGameSpec,
    gamma: ControllerSet,
    x0,
    t_start: int = 0,
    k: int = 1,
    t_rs: int = 1,
    seed: int = 0,
    samples: int = 1,
    steps: int | None = None,
    cache: PayoffCache | None = None,
    threads: int = 1,
    cost_to_go: bool = True,
    order=None,
) -> MetaGame:
    """Simulate every profile of length-k controller sequences from ``x0``.

    Segment j runs for ``t_rs`` steps; the rollout lasts
    ``min(k * t_rs, horizon - t_start)`` steps unless ``steps`` overrides it,
    in which case the last segment absorbs the remainder. ``order`` permutes
    the evaluation order (testing hook).
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    if gamma.num_players != spec.num_players:
        raise ValueError("controller set does not match the number of players")
    remaining = spec.horizon - t_start
    if remaining < 1:
        raise ValueError("no steps left in the horizon")
    n_steps = min(k * t_rs, remaining) if steps is None else min(steps, remaining)
    space = [sequence_space(gamma.per_player[i], k) for i in range(spec.num_players)]
    sizes = [len(s) for s in space]
    profiles = list(itertools.product(*[range(n) for n in sizes]))
    digest = state_digest(spec, x0)

    def work(prof):
        ctrls = []
        for i, si in enumerate(prof):
            ms = space[i][si]
            ctrls.append(piecewise([gamma.get(i, c) for c in ms.controller_ids], t_start, t_rs, ms.label))
        return _simulate(spec, ctrls, x0, t_start, n_steps, seed, prof, samples, cache, digest, cost_to_go)

    idx = list(range(len(profiles))) if order is None else list(order)
    if sorted(idx) != list(range(len(profiles))):
        raise ValueError("order must be a permutation of the profile indices")
    results = _map(lambda j: (j, work(profiles[j])), idx, threads)
    costs = np.zeros(tuple(sizes) + (spec.num_players,))
    failed = []
    for j, c in results:
        costs[profiles[j]] = c
        if not np.all(np.isfinite(c)):
            failed.append(profiles[j])
    names = [[ms.label for ms in s] for s in space]
    game = NormalFormGame(tuple(tuple(n) for n in names), costs)
    prov = Provenance(digest, int(t_start), int(t_rs), int(k), int(n_steps), int(seed), int(samples))
    return MetaGame(game, tuple(tuple(s) for s in space), prov, tuple(sorted(failed)))


def assign_members(counts, members) -> list:
    """Canonical strategy assignment: lowest-index members take the first strategies."""
    out = []
    for s, c in enumerate(counts):
        out.extend([s] * c)
    if len(out) != len(members):
        raise ValueError("counts do not match the number of role members")
    return out


def induce_role_symmetric_metagame(
    spec: DynamicGameSpec,
    gamma_roles,
    teams,
    x0,
    seed: int = 0,
    samples: int = 10,
    role_names=None,
    t_start: int = 0,
    steps: int | None = None,
    cache: PayoffCache | None = None,
    threads: int = 1,
) -> MetaGame:
    """Role-symmetric meta-game over static roles.

    ``gamma_roles[r]`` is the ordered list of RoleStrategy objects shared by
    the members of role r, and ``teams[r]`` lists those members' player
    indices. Every role-count profile is simulated ``samples`` times; the
    payoff of (role, strategy) averages the negated costs of the members using
    it. Failed simulations raise, since the table cannot hold a sentinel.
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    teams = [tuple(int(p) for p in t) for t in teams]
    flat = sorted(p for t in teams for p in t)
    if flat != list(range(spec.num_players)):
        raise ValueError("teams must partition the players")
    role_names = tuple(role_names or [f"role{r}" for r in range(len(teams))])
    strat_ids = [tuple(f.id for f in gr) for gr in gamma_roles]
    roles = tuple((role_names[r], len(teams[r])) for r in range(len(teams)))
    profiles = enumerate_role_profiles((roles, strat_ids))
    remaining = spec.horizon - t_start
    n_steps = remaining if steps is None else min(steps, remaining)
    digest = state_digest(spec, x0)

    def work(prof):
        ctrls = [None] * spec.num_players
        who = []
        for r, counts in enumerate(prof):
            assign = assign_members(counts, teams[r])
            for p, s in zip(teams[r], assign):
                ctrls[p] = gamma_roles[r][s].make(p)
                who.append((r, s, p))
        key = [c for rc in prof for c in rc]
        cost = _simulate(spec, ctrls, x0, t_start, n_steps, seed, key, samples, cache, digest, True)
        pay = []
        for r, counts in enumerate(prof):
            row = np.full(len(counts), np.nan)
            for s in range(len(counts)):
                members = [p for (rr, ss, p) in who if rr == r and ss == s]
                if members:
                    row[s] = 0.0 - float(np.mean(cost[members]))
            pay.append(row)
        return pay

    results = _map(work, profiles, threads)
    failed = tuple(p for p, pay in zip(profiles, results) if any(np.any(np.isinf(v)) for v in pay))
    if failed:
        raise RolloutError(f"{len(failed)} role profiles failed to simulate", t_start)
    game = RoleSymmetricGame(roles, tuple(strat_ids), tuple(profiles), tuple(results))
    mapping = tuple(tuple(MetaStrategy((sid,)) for sid in ids) for ids in strat_ids)
    prov = Provenance(digest, int(t_start), int(n_steps), 1, int(n_steps), int(seed), int(samples))
    return MetaGame(game, mapping, prov, failed)


def export_metagame(mg: MetaGame, path) -> tuple:
    """Write the game file and a JSON provenance sidecar; returns both paths."""
    path = Path(path)
    save_game(mg.game, path)
    side = path.with_suffix(path.suffix + ".json")
    doc = {
        "provenance": asdict(mg.provenance),
        "mapping": [[list(ms.controller_ids) for ms in row] for row in mg.mapping],
        "failed_profiles": [list(map(list, p)) if isinstance(p[0], tuple) else list(p) for p in mg.failed_profiles],
    }
    side.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path, side
