"""Acceptance checks, one printed pass/fail line per criterion.

Run ``pytest tests/test_acceptance.py -s`` to see the lines as they happen;
they are also repeated in the terminal summary.
"""
import json
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from oracles import nfg_regret, rsg_deviation_payoff
from rolegame import harness
from rolegame.dynamic import evaluate_costs, piecewise, rollout
from rolegame.envs import ctf as ctf_env
from rolegame.envs import transport as tr_env
from rolegame.gameio import load_game
from rolegame.games import (
    NormalFormGame,
    RoleSymmetricGame,
    count_role_profiles_from,
    deviation_payoff,
)
from rolegame.metagame import PayoffCache, induce_metagame, profile_seed
from rolegame.solvers import SolverConfig, solve


def record(name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def artifacts(out):
    files = {}
    for f in sorted(out.rglob("*")):
        if f.is_file():
            if f.name == "summary.json":
                doc = json.loads(f.read_text())
                doc.pop("metadata")
                files[f.name] = json.dumps(doc, sort_keys=True).encode()
            else:
                files[str(f.relative_to(out))] = f.read_bytes()
    return files


# solver --------------------------------------------------------------------


@pytest.mark.parametrize("method", ["replicator", "fictitious_play"])
def test_rps(method):
    game = load_game(harness.bundled("rps.txt"))
    t0 = time.perf_counter()
    res = solve(game, SolverConfig(method=method))
    secs = time.perf_counter() - t0
    dist = max(float(np.max(np.abs(np.asarray(p) - 1 / 3))) for p in res.profile)
    ok = res.regret.max_regret <= 1e-3 and dist <= 1e-2 and secs < 1.0
    record(f"solver/rps/{method}", ok, f"regret {res.regret.max_regret:.2e}, Linf to uniform {dist:.2e}, {secs:.2f} s")


@pytest.mark.parametrize("method", ["replicator", "fictitious_play"])
def test_random_games_regret(method):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(50):
        shape = tuple(rng.integers(1, 5, size=2))
        game = NormalFormGame(tuple(tuple(f"s{k}" for k in range(n)) for n in shape), rng.normal(size=shape + (2,)))
        res = solve(game, SolverConfig(method=method, rng_seed=int(rng.integers(1 << 30))))
        ref = nfg_regret(game.costs, res.profile)
        worst = max(worst, float(np.max(np.abs(np.asarray(res.regret.per_player_regret) - ref))))
    dominant = 0
    for _ in range(50):
        shape = tuple(rng.integers(2, 5, size=2))
        costs = rng.normal(size=shape + (2,))
        d = [int(rng.integers(n)) for n in shape]
        costs[d[0], :, 0] -= 10.0
        costs[:, d[1], 1] -= 10.0
        game = NormalFormGame(tuple(tuple(f"s{k}" for k in range(n)) for n in shape), costs)
        res = solve(game, SolverConfig(method=method))
        dominant += all(int(np.argmax(p)) == d[i] and p[d[i]] >= 1 - 1e-3 for i, p in enumerate(res.profile))
    ok = worst <= 1e-9 and dominant == 50
    record(f"solver/random-games/{method}", ok, f"max regret mismatch {worst:.1e} over 50 games, dominant resolved {dominant}/50")


def test_deviation_payoff():
    rng = np.random.default_rng(11)
    worst = 0.0
    for trial in range(30):
        counts = [int(c) for c in rng.integers(1, 3, size=int(rng.integers(1, 3)))]
        while sum(counts) > 4:
            counts[-1] -= 1
        sizes = [int(m) for m in rng.integers(1, 4, size=len(counts))]
        roles = tuple((f"r{i}", n) for i, n in enumerate(counts))
        sets = tuple(tuple(f"s{k}" for k in range(m)) for m in sizes)
        game = RoleSymmetricGame.from_function(roles, sets, lambda prof: [[rng.normal() for _ in c] for c in prof])
        mix = [rng.dirichlet(np.ones(m)) for m in sizes]
        for r in range(len(roles)):
            for s in range(sizes[r]):
                worst = max(worst, abs(deviation_payoff(game, r, s, mix) - rsg_deviation_payoff(game, r, s, mix)))
    record("solver/deviation-payoff", worst <= 1e-12, f"max error {worst:.1e} on 30 random games (N <= 4)")


def test_counting():
    t0 = time.perf_counter()
    sym = count_role_profiles_from((("a", 6), ("b", 6)), (tuple("vwxyz"),) * 2)
    asym = count_role_profiles_from(tuple((f"p{i}", 1) for i in range(12)), (tuple("vwxyz"),) * 12)
    secs = time.perf_counter() - t0
    ok = sym == 44_100 and asym == 244_140_625 and secs < 0.1
    record("counting", ok, f"{sym:,} and {asym:,} in {secs * 1e3:.1f} ms")


# meta-game -----------------------------------------------------------------


def test_metagame_oracle(transport):
    params, spec, gamma, x0 = transport
    kw = dict(k=3, t_rs=33, steps=100, seed=5, samples=1)
    mg = induce_metagame(spec, gamma, x0, **kw)
    rng = np.random.default_rng(3)
    picks = [tuple(int(v) for v in rng.integers(0, 8, size=2)) for _ in range(20)]
    exact = 0
    for prof in picks:
        cs = [piecewise([gamma.get(i, c) for c in mg.strategy(i, s).controller_ids], 0, 33) for i, s in enumerate(prof)]
        tr = rollout(spec, cs, x0, seed=profile_seed(5, prof, 0), steps=100)
        exact += np.array_equal(mg.game.costs[prof], evaluate_costs(tr))
    order = list(rng.permutation(64))
    cache = PayoffCache()
    variants = [
        induce_metagame(spec, gamma, x0, order=order, **kw),
        induce_metagame(spec, gamma, x0, cache=cache, **kw),
        induce_metagame(spec, gamma, x0, cache=cache, **kw),
    ]
    same = sum(np.array_equal(v.game.costs, mg.game.costs) and v.mapping == mg.mapping for v in variants)
    ok = exact == 20 and same == 3 and cache.hits == 64
    record("metagame/oracle", ok, f"{exact}/20 entries bit-exact, order/cache variants identical {same}/3")


# transport -----------------------------------------------------------------


@pytest.fixture(scope="module")
def transport_runs(tmp_path_factory):
    out = {}
    for mode in ("open", "closed", "random"):
        d = tmp_path_factory.mktemp(f"transport_{mode}")
        t0 = time.perf_counter()
        s = harness.run(harness.load_config(harness.bundled(f"transport_{mode}.yaml")), d)
        out[mode] = (s, time.perf_counter() - t0)
    return out


def test_transport_open_loop(transport_runs):
    s, secs = transport_runs["open"]
    rep = s["replans"][0]
    pure = all(max(p) == 1.0 for p in rep["profile"])
    leaders = [sum(row[j]["controller"] == tr_env.LEADER for row in s["plan"]) for j in range(len(s["plan"][0]))]
    ok = s["status"] == "ok" and s["success"] and s["min_human_distance"] > 1 and pure and leaders == [1, 1, 1] and secs < 60
    record(
        "transport/open-loop",
        ok,
        f"success {s['success']}, min d_h {s['min_human_distance']:.2f}, roles {rep['chosen']}, pure {pure}, {secs:.1f} s",
    )


def test_transport_random_gap(transport_runs):
    rnd, _ = transport_runs["random"]
    opn, _ = transport_runs["open"]
    gaps = [rnd["costs"][i] / opn["costs"][i] - 1 for i in range(2)]
    ok = min(gaps) >= 0.20 and rnd["config"]["repeat"] == 100
    record("transport/random-gap", ok, f"random exceeds open loop by {gaps[0]:.0%} / {gaps[1]:.0%} over 100 seeds")


def test_transport_closed_loop(transport_runs):
    cl, _ = transport_runs["closed"]
    op, _ = transport_runs["open"]
    per = all(cl["costs"][i] <= 1.05 * op["costs"][i] for i in range(2))
    team = abs(cl["team_cost"] / op["team_cost"] - 1)
    ok = cl["status"] == "ok" and cl["success"] and per and team <= 0.15
    record(
        "transport/closed-loop",
        ok,
        f"costs {cl['costs'][0]:.1f}/{cl['costs'][1]:.1f} vs open {op['costs'][0]:.1f}/{op['costs'][1]:.1f}, team within {team:.1%}",
    )


def test_transport_replan_time(transport_runs):
    cl, _ = transport_runs["closed"]
    worst = max(cl["metadata"]["replan_seconds"])
    record("transport/replan-time", worst <= 2.0, f"slowest of {len(cl['replans'])} replans {worst:.2f} s")


# capture the flag ----------------------------------------------------------


def run_ctf(name, tmp_path_factory):
    t0 = time.perf_counter()
    s = harness.run(harness.load_config(harness.bundled(f"{name}.yaml")), tmp_path_factory.mktemp(name))
    return s, time.perf_counter() - t0


@pytest.mark.parametrize("name", ["ctf_sym3", "ctf_sym4"])
def test_ctf_symmetric(name, tmp_path_factory):
    s, secs = run_ctf(name, tmp_path_factory)
    red, blue = s["teams"]["red"], s["teams"]["blue"]
    gap = abs(red["defense_probability"] - blue["defense_probability"])
    ok = min(red["defense_probability"], blue["defense_probability"]) >= 0.8 and gap <= 0.1 and secs < 300
    record(
        f"ctf/{name[4:]}",
        ok,
        f"defense red {red['defense_probability']:.2f} blue {blue['defense_probability']:.2f}, {secs:.1f} s",
    )


def test_ctf_case4(tmp_path_factory):
    s, _ = run_ctf("ctf_case4", tmp_path_factory)
    red, blue = s["teams"]["red"], s["teams"]["blue"]
    ok = red["offense_probability"] >= 0.9 and blue["defense_probability"] >= 0.9 and red["expected_payoff"] > 0
    record(
        "ctf/case4",
        ok,
        f"red offense {red['offense_probability']:.2f}, blue defense {blue['defense_probability']:.2f}, red payoff {red['expected_payoff']:.2f}",
    )


def test_ctf_ordering(tmp_path_factory):
    off = [run_ctf(f"ctf_case{c}", tmp_path_factory)[0]["teams"]["blue"]["offense_probability"] for c in (1, 2, 3)]
    ok = off[1] > off[0] and off[2] > off[0]
    record("ctf/ordering", ok, f"blue offense case1 {off[0]:.2f}, case2 {off[1]:.2f}, case3 {off[2]:.2f}")


# invariants ----------------------------------------------------------------


def test_environment_invariants():
    rng = np.random.default_rng(8)
    fails = []
    p = tr_env.TransportParams()
    for trial in range(20):
        s = tr_env.initial_state(p)
        for _ in range(30):
            s = tr_env.transport_step(s, rng.uniform(-3, 3, 2), rng.uniform(-3, 3, 2), p)
            ends = tr_env.endpoints(s, p.rod_length)
            if abs(np.linalg.norm(ends[1] - ends[0]) - p.rod_length) > 1e-12:
                fails.append("rod length")
            if np.any(np.abs(s.rod_vel) > p.v_cap) or abs(s.rod_ang_vel) > p.omega_cap or np.any(np.abs(s.human_vel) > 1.0):
                fails.append("caps")
    hp = tr_env.TransportParams(human_gains=(1.0, 1.0))
    _, vel = tr_env.human_step((0, 0), (0, 0), (10, 0), [(0, -5), (1e6, 1e6)], hp)
    if not np.allclose(vel, [0.1, 0.2], atol=1e-6):
        fails.append("human acceleration")
    if tr_env.point_segment_distance((10, 5), (0, 0), (20, 0)) != 5.0 or tr_env.point_segment_distance((25, 0), (0, 0), (20, 0)) != 5.0:
        fails.append("segment distance")
    for _ in range(200):
        q, a, b = rng.uniform(-50, 50, (3, 2))
        ts = np.linspace(0, 1, 20001)[:, None]
        ref = np.min(np.linalg.norm(a + ts * (b - a) - q, axis=1))
        if not -1e-9 <= ref - tr_env.point_segment_distance(q, a, b) <= np.linalg.norm(b - a) / 20000 + 1e-9:
            fails.append("segment distance")
    cfg = ctf_env.CtfConfig(collision_radius=3.0, max_steps=10**6)
    starts = cfg.starts()
    for _ in range(300):
        pos = tuple(map(tuple, rng.uniform(0, 100, (6, 2))))
        st = ctf_env.ctf_step(ctf_env.CtfState(pos, ((0.0, 0.0),) * 6), [(0.0, 0.0)] * 6, cfg)
        for i in range(3):
            for j in range(3, 6):
                if math.dist(pos[i], pos[j]) <= 3.0 and not (st.pos[i] == starts[i] and st.pos[j] == starts[j]):
                    fails.append("collision reset")
        r = ctf_env.terminal_payoffs(st, cfg)
        if r.sum() != 0:
            fails.append("zero sum")
    record("invariants", not fails, "all hold" if not fails else f"violations: {sorted(set(fails))}")


def test_determinism(tmp_path):
    runs = {
        "transport": {"scenario": "transport", "seed": 3, "planner": {"mode": "closed", "k": 2, "t_rs": 5}, "env": {"horizon": 15}},
        "ctf": {"scenario": "ctf", "seed": 2, "env": {"n_red": 2, "n_blue": 2, "max_steps": 60, "samples": 2}},
        "nfg": {"scenario": "nfg_file", "game": str(harness.bundled("rps.txt"))},
    }
    same = []
    for name, doc in runs.items():
        outs = []
        for k, threads in enumerate((1, 1, 4)):
            d = tmp_path / f"{name}{k}"
            harness.run(harness.parse_config(doc, threads=threads), d)
            outs.append(artifacts(d))
        if outs[0] == outs[1] == outs[2]:
            same.append(name)
    record("determinism", len(same) == 3, f"byte-identical across repeats and thread counts: {', '.join(same)}")
