import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rolegame.dynamic import rollout
from rolegame.envs.ctf import (
    CtfConfig,
    CtfState,
    build_ctf_role_game,
    build_ctf_spec,
    ctf_step,
    defense_control,
    initial_state,
    offense_control,
    team_controllers,
    terminal_payoffs,
    threat_weights,
)
from rolegame.games import count_role_profiles

pt = st.tuples(st.floats(0, 100), st.floats(0, 100))
ctrl = st.tuples(st.floats(-5, 5), st.floats(-5, 5))


def duel(red=(0.0, 0.0), blue=(0.0, 2.0), **kw):
    kw.setdefault("red_flag", (-50.0, 0.0))
    kw.setdefault("blue_flag", (10.0, 0.0))
    return CtfConfig(n_red=1, n_blue=1, red_starts=(red,), blue_starts=(blue,), **kw)


def at(config, pos, vel=None, t=0):
    vel = vel or tuple((0.0, 0.0) for _ in pos)
    return CtfState(tuple(pos), tuple(vel), t, None)


class TestStep:
    @given(st.lists(ctrl, min_size=6, max_size=6), st.lists(ctrl, min_size=6, max_size=6))
    def test_velocity_clip(self, u, v0):
        cfg = CtfConfig(v_max=(0.5, 1.0), collision_radius=0.0)
        s = ctf_step(at(cfg, cfg.starts(), v0), u, cfg)
        for i, (vx, vy) in enumerate(s.vel):
            cap = cfg.v_max[cfg.team_of(i)]
            assert abs(vx) <= cap and abs(vy) <= cap

    @given(st.lists(pt, min_size=6, max_size=6), st.lists(ctrl, min_size=6, max_size=6))
    def test_collision_reset(self, pos, u):
        cfg = CtfConfig(collision_radius=3.0, max_steps=10**6)
        s = ctf_step(at(cfg, pos), u, cfg)
        starts = cfg.starts()
        red, blue = cfg.teams
        moved = {
            i: (pos[i][0] + max(-0.75, min(0.75, u[i][0])), pos[i][1] + max(-0.75, min(0.75, u[i][1])))
            for i in range(6)
        }
        for i in red:
            for j in blue:
                if math.dist(moved[i], moved[j]) <= 3.0:
                    assert s.pos[i] == starts[i] and s.pos[j] == starts[j]
                    assert s.vel[i] == (0.0, 0.0) == s.vel[j]

    def test_same_team_never_collides(self):
        cfg = CtfConfig(n_red=2, n_blue=1, red_starts=((30, 50), (30, 50.5)), blue_starts=((80, 10),), collision_radius=3)
        s = ctf_step(initial_state(cfg), [(0, 0)] * 3, cfg)
        assert s.pos[:2] == ((30.0, 50.0), (30.0, 50.5))

    def test_collision_reset_pair(self):
        cfg = duel(red=(0.0, 10.0), blue=(0.0, 50.0), collision_radius=1.0)
        s = ctf_step(at(cfg, ((5.0, 5.0), (5.5, 5.0))), [(0, 0), (0, 0)], cfg)
        assert s.pos == cfg.starts()

    def test_capture_and_draws(self):
        cfg = CtfConfig(n_red=1, n_blue=1, collision_radius=0.0, max_steps=50)
        red_win = ctf_step(at(cfg, ((89.0, 50.0), (50.0, 0.0))), [(0, 0), (0, 0)], cfg)
        assert red_win.winner == "red"
        both = ctf_step(at(cfg, ((89.0, 50.0), (11.0, 50.0))), [(0, 0), (0, 0)], cfg)
        assert both.winner == "draw"
        timeout = ctf_step(at(cfg, ((30.0, 0.0), (60.0, 0.0)), t=49), [(0, 0), (0, 0)], cfg)
        assert timeout.winner == "draw" and timeout.t == 50
        assert ctf_step(red_win, [(1, 1), (1, 1)], cfg) is red_win

    @given(st.lists(pt, min_size=6, max_size=6))
    def test_zero_sum(self, pos):
        cfg = CtfConfig(collision_radius=0.0)
        s = ctf_step(at(cfg, pos), [(0, 0)] * 6, cfg)
        r = terminal_payoffs(s, cfg)
        assert r[:3].sum() + r[3:].sum() == 0
        assert len(set(r[:3])) == 1 and len(set(r[3:])) == 1

    def test_lone_attacker_arrives(self):
        cfg = CtfConfig(n_red=1, n_blue=0, red_starts=((60.0, 50.0),), max_steps=500)
        s = initial_state(cfg)
        while not s.done:
            s = ctf_step(s, [offense_control(s, 0, cfg)], cfg)
        assert s.winner == "red"
        assert s.t <= math.ceil(28 / 0.75) + 10


class TestControllers:
    def test_offense_by_hand(self):
        cfg = duel()
        u = offense_control(initial_state(cfg), 0, cfg)
        assert u == pytest.approx([0.3, -0.05])

    def test_defense_without_opponents(self):
        cfg = CtfConfig(n_red=1, n_blue=0)
        assert np.array_equal(defense_control(initial_state(cfg), 0, cfg, np.random.default_rng(0)), np.zeros(2))

    def test_defense_heads_for_midpoint(self):
        cfg = duel(red=(0.0, 0.0), blue=(-30.0, 20.0))
        u = defense_control(initial_state(cfg), 0, cfg, np.random.default_rng(0))
        assert u == pytest.approx([-40.0, 10.0])

    def test_threat_weights(self):
        cfg = CtfConfig(n_red=1, n_blue=2, red_starts=((30, 50),), blue_starts=((20, 50), (40, 50)))
        w = threat_weights(initial_state(cfg), 0, cfg)
        assert w == pytest.approx([3 / 4, 1 / 4], rel=1e-5)
        soft = CtfConfig(**{**cfg.to_dict(), "defense_sampling": "softmax", "softmax_tau": 10.0})
        assert threat_weights(initial_state(soft), 0, soft) == pytest.approx(
            [1 / (1 + math.exp(-2)), math.exp(-2) / (1 + math.exp(-2))]
        )

    def test_all_defense_is_draw(self):
        cfg = CtfConfig(max_steps=200)
        tr = rollout(build_ctf_spec(cfg), team_controllers(cfg, (0, 0)), initial_state(cfg), seed=1)
        assert tr.states[-1].winner == "draw"
        assert np.all(tr.stage_cost_log == 0)


class TestRoleGame:
    def test_profile_count_and_determinism(self):
        cfg = CtfConfig(max_steps=60, samples=2)
        a = build_ctf_role_game(cfg, seed=3)
        b = build_ctf_role_game(cfg, seed=3, threads=3)
        assert count_role_profiles(a.game) == 16
        assert a.game.profiles == b.game.profiles
        assert np.array_equal(np.asarray(a.game.payoffs, float), np.asarray(b.game.payoffs, float), equal_nan=True)

    def test_config_unknown_key(self):
        with pytest.raises(ValueError, match="speed"):
            CtfConfig.from_dict({"speed": 1})

    @pytest.mark.parametrize("kw", [dict(n_red=0, n_blue=0), dict(v_max=(0, 1)), dict(defense_sampling="x"), dict(max_steps=0)])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            CtfConfig(**kw)
