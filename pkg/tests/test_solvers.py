import csv
import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rolegame.gameio import load_game
from rolegame.games import MixedProfile, NormalFormGame, RoleSymmetricGame, regret
from rolegame.harness import bundled
from rolegame.solvers import (
    SolverConfig,
    certify,
    replicator_step,
    solve,
    solve_fictitious_play,
    solve_replicator,
    write_trace_csv,
)

from oracles import naive_fictitious_play, nfg_regret


def names(sizes):
    return tuple(tuple(f"s{k}" for k in range(m)) for m in sizes)


def random_game(seed, max_size=4, integer=False):
    rng = np.random.default_rng(seed)
    sizes = tuple(int(x) for x in rng.integers(1, max_size + 1, size=2))
    c = rng.integers(-5, 6, size=sizes + (2,)).astype(float) if integer else rng.normal(size=sizes + (2,))
    return NormalFormGame(names(sizes), c)


def dominant_scan(game):
    """Strictly dominant strategy per player by brute-force scan, or None."""
    out = []
    for i, m in enumerate(game.sizes):
        c = np.moveaxis(game.costs[..., i], i, 0).reshape(m, -1)
        dom = [s for s in range(m) if all(np.all(c[s] < c[t]) for t in range(m) if t != s)]
        out.append(dom[0] if dom else None)
    return out


class TestConfig:
    @pytest.mark.parametrize(
        "kw",
        [dict(method="newton"), dict(step_size=0.0), dict(step_size=1.5), dict(max_iters=0), dict(regret_tol=-1), dict(restarts=-1), dict(patience=0)],
    )
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            SolverConfig(**kw)


class TestRps:
    @pytest.mark.parametrize("method", ["replicator", "fictitious_play"])
    def test_uniform_fast(self, method):
        g = load_game(bundled("rps.txt"))
        t = time.perf_counter()
        res = solve(g, SolverConfig(method=method))
        assert time.perf_counter() - t < 1.0
        assert res.regret.max_regret <= 1e-3
        for p in res.profile:
            assert np.max(np.abs(p - 1 / 3)) <= 1e-2

    def test_regret_examples(self):
        g = load_game(bundled("rps.txt"))
        rep = regret(g, [np.array([1.0, 0, 0]), np.ones(3) / 3])
        assert rep.per_player_regret == pytest.approx((0.0, 1.0))
        rep = regret(g, MixedProfile.pure([3, 3], [0, 0]))
        assert rep.per_player_regret == pytest.approx((1.0, 1.0))


class TestDominance:
    @pytest.mark.parametrize("method", ["replicator", "fictitious_play"])
    def test_bundled_dominant(self, method):
        g = load_game(bundled("dominant.txt"))
        dom = dominant_scan(g)
        assert dom == [1, 1]
        res = solve(g, SolverConfig(method=method))
        assert [int(np.argmax(p)) for p in res.profile] == dom
        if method == "replicator":
            assert res.profile.support() == ((1,), (1,))
            assert res.regret.max_regret == 0.0
        else:
            # the empirical mixture keeps the single initial play
            assert res.regret.max_regret <= 1e-3

    @given(st.integers(0, 2**31))
    def test_random_dominance(self, seed):
        rng = np.random.default_rng(seed)
        m1, m2 = rng.integers(2, 5, size=2)
        c = rng.normal(size=(m1, m2, 2))
        d1, d2 = rng.integers(m1), rng.integers(m2)
        c[d1, :, 0] = c[..., 0].min() - 1.0
        c[:, d2, 1] = c[..., 1].min() - 1.0
        g = NormalFormGame(names((m1, m2)), c)
        assert dominant_scan(g) == [d1, d2]
        res = solve(g)
        assert res.profile.support() == ((d1,), (d2,))


class TestRegretCertificate:
    @pytest.mark.parametrize("method", ["replicator", "fictitious_play"])
    def test_fifty_random_games(self, method):
        for seed in range(50):
            g = random_game(seed)
            res = solve(g, SolverConfig(method=method, max_iters=2000))
            ref = nfg_regret(g.costs, list(res.profile))
            assert np.allclose(res.regret.per_player_regret, ref, rtol=0, atol=1e-9)
            assert res.regret.max_regret == pytest.approx(max(ref), abs=1e-9)

    def test_certify_matches_regret(self):
        g = random_game(3)
        p = MixedProfile.uniform(g.sizes)
        assert certify(g, p) == regret(g, p)


class TestReplicator:
    def test_single_step_by_hand(self):
        g = RoleSymmetricGame.from_function(
            (("all", 1),), (("a", "b"),), lambda p: [[1.0 if p[0][0] else np.nan, 0.0 if p[0][1] else np.nan]]
        )
        out = replicator_step(g, [np.array([0.5, 0.5])], 0.1)
        assert out[0] == pytest.approx([0.525, 0.475], abs=1e-15)

    def test_deterministic(self):
        g = random_game(7)
        a, b = solve_replicator(g), solve_replicator(g)
        assert all(np.array_equal(x, y) for x, y in zip(a.profile, b.profile))
        assert a.restart == b.restart and a.iterations_used == b.iterations_used

    def test_restart_regrets_reported(self):
        res = solve_replicator(load_game(bundled("rps.txt")), SolverConfig(restarts=3))
        assert len(res.restart_regrets) == 4
        assert res.regret.max_regret == min(res.restart_regrets)

    def test_infinite_cost_is_avoided(self):
        c = np.zeros((2, 2, 2))
        c[0, :, 0] = np.inf  # player 0's strategy 0 can fail
        c[1, :, 0] = 5.0
        g = NormalFormGame(names((2, 2)), c)
        res = solve_replicator(g)
        assert res.profile[0][1] == pytest.approx(1.0)
        assert np.all(np.isfinite(res.profile[0]))

    def test_role_symmetric_coordination(self):
        def fn(prof):
            (c,) = prof
            return [[2.0 * c[0] if c[0] else np.nan, 1.0 * c[1] if c[1] else np.nan]]

        g = RoleSymmetricGame.from_function((("all", 3),), (("a", "b"),), fn)
        res = solve_replicator(g)
        assert res.regret.max_regret <= 1e-3

    def test_three_player_generic_path(self):
        rng = np.random.default_rng(5)
        g = NormalFormGame(names((2, 2, 2)), rng.normal(size=(2, 2, 2, 3)))
        res = solve_replicator(g)
        ref = nfg_regret(g.costs, list(res.profile))
        assert res.regret.max_regret == pytest.approx(max(ref), abs=1e-9)

    def test_trace_csv(self, tmp_path):
        g = load_game(bundled("rps.txt"))
        res = solve(g, SolverConfig(record_trace=True, restarts=0))
        write_trace_csv(res, tmp_path / "t.csv")
        rows = list(csv.reader(open(tmp_path / "t.csv")))
        assert rows[0][0] == "iteration" and rows[0][-2:] == ["regret", "resets"]
        assert len(rows) - 1 == len(res.trace)
        with pytest.raises(ValueError):
            write_trace_csv(solve(g), tmp_path / "u.csv")


class TestFictitiousPlay:
    def test_matching_pennies(self):
        c = np.array([[1.0, -1.0], [-1.0, 1.0]])
        g = NormalFormGame(names((2, 2)), np.stack([c, -c], axis=-1))
        res = solve_fictitious_play(g, SolverConfig(method="fictitious_play", regret_tol=0.0, max_iters=10_000))
        assert res.iterations_used == 10_000
        for p in res.profile:
            assert np.max(np.abs(p - 0.5)) <= 0.05

    def test_event_jumps_match_naive_loop(self):
        for seed in range(60):
            g = random_game(seed, integer=True)
            iters = 300
            res = solve_fictitious_play(g, SolverConfig(method="fictitious_play", regret_tol=0.0, max_iters=iters))
            c1, c2 = naive_fictitious_play(g.costs, iters)
            assert np.allclose(res.profile[0], c1 / c1.sum(), atol=1e-12), seed
            assert np.allclose(res.profile[1], c2 / c2.sum(), atol=1e-12), seed

    def test_rejects_infinite_costs(self):
        c = np.zeros((2, 2, 2))
        c[0, 0, 0] = np.inf
        with pytest.raises(ValueError):
            solve_fictitious_play(NormalFormGame(names((2, 2)), c))

    def test_seeded_start(self):
        g = random_game(11)
        a = solve_fictitious_play(g, SolverConfig(method="fictitious_play", rng_seed=3))
        b = solve_fictitious_play(g, SolverConfig(method="fictitious_play", rng_seed=3))
        assert all(np.array_equal(x, y) for x, y in zip(a.profile, b.profile))
