"""Replicator dynamics and fictitious play, with regret certification.

Normal-form games are handled as multi-population systems (one population per
player). Payoffs are the negated costs; this is the only place the cost and
payoff orientations meet.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .games import (
    MixedProfile,
    NormalFormGame,
    RegretReport,
    RoleSymmetricGame,
    _table,
    check_mixture,
    deviation_costs,
    deviation_payoffs,
    regret,
    role_regret,
)

METHODS = ("replicator", "fictitious_play")


DEFAULT_ITERS = {"replicator": 10_000, "fictitious_play": 1_000_000}


@dataclass(frozen=True)
class SolverConfig:
    method: str = "replicator"
    step_size: float = 0.1
    # None picks the method default: 10,000 replicator steps or 1,000,000
    # fictitious-play plays (plays are cheap there, runs are batched)
    max_iters: int | None = None
    regret_tol: float = 1e-3
    restarts: int = 4
    rng_seed: int = 0
    record_trace: bool = False
    # stop a replicator run after this many iterations without a new best regret
    patience: int = 5000
    # every this many iterations, accept the argmax pure profile if its regret is
    # within tolerance (0 disables)
    snap_every: int = 10
    # rescale each player's payoffs to [0, 1] before running the dynamics
    normalize: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}, expected one of {METHODS}")
        if not 0 < self.step_size <= 1:
            raise ValueError("step_size must lie in (0, 1]")
        if self.max_iters is None:
            object.__setattr__(self, "max_iters", DEFAULT_ITERS[self.method])
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if not self.regret_tol >= 0:
            raise ValueError("regret_tol must be non-negative")
        if self.snap_every < 0:
            raise ValueError("snap_every must be non-negative")
        if self.patience < 1:
            raise ValueError("patience must be positive")
        if self.restarts < 0:
            raise ValueError("restarts must be non-negative")
        if self.rng_seed < 0:
            raise ValueError("rng_seed must be non-negative")


@dataclass(frozen=True)
class SolveResult:
    profile: MixedProfile
    regret: RegretReport
    iterations_used: int
    trace: tuple | None = None
    restart: int = 0
    converged: bool = False
    resets: int = 0
    restart_regrets: tuple = field(default=())


def certify(game, profile) -> RegretReport:
    """Regret of a profile; payoff orientation for role-symmetric games."""
    if isinstance(game, RoleSymmetricGame):
        return role_regret(game, profile)
    return regret(game, profile)


# ------------------------------------------------------------------ replicator


def _rd_update(sigmas, devs, step):
    out, resets = [], 0
    for sig, u in zip(sigmas, devs):
        phi = sig @ u
        new = sig + step * sig * (u - phi)
        np.maximum(new, 0.0, out=new)
        tot = new.sum()
        if tot <= 0 or not np.isfinite(tot):
            new = np.full_like(sig, 1.0 / sig.size)
            resets += 1
        else:
            new = new / tot
        out.append(new)
    return out, resets


def replicator_step(game: RoleSymmetricGame, mixture, step_size: float) -> MixedProfile:
    """One explicit Euler step of the per-role replicator equation, renormalized."""
    if not 0 < step_size <= 1:
        raise ValueError("step_size must lie in (0, 1]")
    prof = mixture if isinstance(mixture, MixedProfile) else MixedProfile(tuple(mixture))
    devs = deviation_payoffs(game, prof)
    new, _ = _rd_update([np.array(p) for p in prof], devs, step_size)
    return MixedProfile(tuple(new))


class _NfgPayoffs:
    """Negated, optionally rescaled payoffs of a normal-form game."""

    def __init__(self, game: NormalFormGame, normalize: bool):
        c = np.array(game.costs)
        self.n = game.num_players
        self.sizes = game.sizes
        pay = np.empty_like(c)
        self.scale = np.ones(self.n)
        for i in range(self.n):
            ci = c[..., i]
            fin = ci[np.isfinite(ci)]
            lo, hi = (fin.min(), fin.max()) if fin.size else (0.0, 0.0)
            span = hi - lo
            # an infinite cost is treated as one full span worse than the worst finite cost
            worst = hi + (span if span > 0 else 1.0)
            ci = np.where(np.isfinite(ci), ci, worst)
            p = -ci
            if normalize:
                s = worst - lo if np.any(~np.isfinite(c[..., i])) else span
                s = s if s > 0 else 1.0
                p = (p + lo) / s  # best finite outcome -> 0
                self.scale[i] = s
            pay[..., i] = p
        self.pay = pay
        if self.n == 2:
            self.a = pay[..., 0]
            self.b = pay[..., 1]

    def devs(self, sigmas):
        if self.n == 2:
            return [self.a @ sigmas[1], sigmas[0] @ self.b]
        out = []
        for i in range(self.n):
            t = self.pay[..., i]
            for j in reversed(range(self.n)):
                if j == i:
                    continue
                t = np.moveaxis(t, j, -1) @ sigmas[j]
            out.append(t)
        return out


def _pure_regret(model, sizes, choice):
    pure = [np.eye(n)[c] for n, c in zip(sizes, choice)]
    devs = model.devs(pure)
    return max(float((u.max() - u[c]) * k) for u, c, k in zip(devs, choice, model.scale))


class _RsgPayoffs:
    """Vectorized deviation payoffs for a role-symmetric game."""

    def __init__(self, game: RoleSymmetricGame, normalize: bool):
        self.game = game
        t = _table(game)
        R = game.num_roles
        self.scale = np.ones(R)
        self.shift = np.zeros(R)
        for r in range(R):
            vals = t["pay"][r]
            fin = vals[np.isfinite(vals)]
            span = fin.max() - fin.min() if fin.size else 0.0
            if normalize and span > 0:
                self.scale[r] = span
                self.shift[r] = fin.max()
        # per (role, strategy): profiles where the strategy is played, the reduced
        # count vectors and their multinomial coefficients
        from .games import _multinomial

        self.parts = []
        for r in range(R):
            c = t["counts"][r]
            row = []
            for s in range(game.sizes[r]):
                has = np.flatnonzero(c[:, s] >= 1)
                red = c[has].copy()
                red[:, s] -= 1
                coef = np.array([_multinomial(x) for x in red], dtype=float)
                pay = (t["pay"][r][has, s] - self.shift[r]) / self.scale[r]
                row.append((has, red, coef, pay))
            self.parts.append(row)
        self.counts = t["counts"]
        self.coef_full = t["coef_full"]

    @staticmethod
    def _probs(counts, coef, sig):
        pw = np.where(counts > 0, sig[None, :] ** counts, 1.0)
        return coef * pw.prod(axis=1)

    def devs(self, sigmas):
        R = len(sigmas)
        full = np.array([self._probs(self.counts[r], self.coef_full[r], sigmas[r]) for r in range(R)])
        out = []
        for r in range(R):
            others = np.prod(np.delete(full, r, axis=0), axis=0) if R > 1 else None
            vals = np.empty(len(sigmas[r]))
            for s, (has, red, coef, pay) in enumerate(self.parts[r]):
                w = self._probs(red, coef, sigmas[r])
                if others is not None:
                    w = w * others[has]
                vals[s] = float(w @ pay)
            out.append(vals)
        return out


def _init_profile(sizes, seed, restart):
    if restart == 0:
        return [np.full(n, 1.0 / n) for n in sizes]
    rng = np.random.default_rng([seed, restart])
    return [rng.dirichlet(np.ones(n)) for n in sizes]


def _unique_max(p) -> bool:
    return int(np.count_nonzero(p == p.max())) == 1


def _snap_pure(game, prof: MixedProfile, rep: RegretReport):
    """Replace a near-pure profile by its argmax pure profile when that is no worse.

    Tied maxima are left alone so snapping never breaks ties by index.
    """
    if not all(_unique_max(p) for p in prof):
        return prof, rep
    choice = [int(np.argmax(p)) for p in prof]
    pure = MixedProfile.pure([p.size for p in prof], choice)
    if all(np.array_equal(a, b) for a, b in zip(pure, prof)):
        return prof, rep
    prep = certify(game, pure)
    if prep.max_regret <= rep.max_regret:
        return pure, prep
    return prof, rep


def _rd_two_player_batch(model, config: SolverConfig, sizes):
    """All restarts of a bimatrix game at once, one row per restart.

    Rows stop independently on regret, patience or pure snapping. The
    stationarity test runs on the same schedule as snapping to save work.
    """
    runs = config.restarts + 1
    inits = [_init_profile(sizes, config.rng_seed, r) for r in range(runs)]
    x = np.array([p[0] for p in inits])
    y = np.array([p[1] for p in inits])
    a, b = model.a, model.b
    k0, k1 = model.scale
    h, tol, snap = config.step_size, config.regret_tol, config.snap_every
    active = np.ones(runs, dtype=bool)
    converged = np.zeros(runs, dtype=bool)
    iters = np.zeros(runs, dtype=int)
    resets = np.zeros(runs, dtype=int)
    best = np.full(runs, np.inf)
    best_at = np.zeros(runs, dtype=int)
    traces = [[] for _ in range(runs)] if config.record_trace else None
    eye_x, eye_y = np.eye(sizes[0]), np.eye(sizes[1])
    # rows of a finished run are recorded here and ignored afterwards
    fx, fy = x.copy(), y.copy()
    at = np.arange(runs)
    it = 0
    while it < config.max_iters:
        ux = y @ a.T
        uy = x @ b
        px = (x * ux).sum(axis=1)
        py = (y * uy).sum(axis=1)
        cur = np.maximum((ux.max(axis=1) - px) * k0, (uy.max(axis=1) - py) * k1)
        if traces is not None:
            for r in at[active]:
                traces[r].append((it, [x[r].copy(), y[r].copy()], float(cur[r]), int(resets[r])))
        stop = active & (cur <= tol)
        conv_now = stop.copy()
        improved = cur < best
        best[improved] = cur[improved]
        best_at[improved] = it
        stop |= active & (it - best_at >= config.patience)
        if snap and it % snap == 0:
            i, j = x.argmax(axis=1), y.argmax(axis=1)
            pr = np.maximum(
                (a[:, j].max(axis=0) - a[i, j]) * k0,
                (b[i, :].max(axis=1) - b[i, j]) * k1,
            )
            uniq = ((x == x.max(axis=1, keepdims=True)).sum(axis=1) == 1) & (
                (y == y.max(axis=1, keepdims=True)).sum(axis=1) == 1
            )
            ok = active & ~stop & uniq & (pr <= tol)
            if ok.any():
                x[ok] = eye_x[i[ok]]
                y[ok] = eye_y[j[ok]]
                stop |= ok
                conv_now |= ok
        if stop.any():
            fx[stop], fy[stop] = x[stop], y[stop]
            converged |= conv_now
            active &= ~stop
            if not active.any():
                break
        nx = x + h * x * (ux - px[:, None])
        ny = y + h * y * (uy - py[:, None])
        np.maximum(nx, 0.0, out=nx)
        np.maximum(ny, 0.0, out=ny)
        sx, sy = nx.sum(axis=1), ny.sum(axis=1)
        if not (sx.min() > 0 and sy.min() > 0):
            bad_x, bad_y = ~(sx > 0), ~(sy > 0)
            nx[bad_x] = 1.0 / sizes[0]
            ny[bad_y] = 1.0 / sizes[1]
            sx[bad_x] = 1.0
            sy[bad_y] = 1.0
            resets += active & bad_x
            resets += active & bad_y
        nx /= sx[:, None]
        ny /= sy[:, None]
        iters += active
        if snap and it % snap == 0 or it < 2:
            change = np.maximum(np.abs(nx - x).max(axis=1), np.abs(ny - y).max(axis=1))
            still = active & (change < 1e-10)
            if still.any():
                fx[still], fy[still] = nx[still], ny[still]
                active &= ~still
        x, y = nx, ny
        it += 1
        if not active.any():
            break
    fx[active], fy[active] = x[active], y[active]
    x, y = fx, fy
    out = []
    for r in range(runs):
        out.append(([x[r], y[r]], int(iters[r]), bool(converged[r]), int(resets[r]), traces[r] if traces is not None else None))
    return out


def _run_replicator(game, model, config: SolverConfig, restart: int):
    sizes = game.sizes
    sig = _init_profile(sizes, config.rng_seed, restart)
    trace = [] if config.record_trace else None
    resets = 0
    iters = 0
    converged = False
    if all(n == 1 for n in sizes):
        converged = True
    best_reg, best_at = np.inf, 0
    while not converged and iters < config.max_iters:
        devs = model.devs(sig)
        # regret of the current profile, in original units
        cur_reg = max(
            float((u.max() - np.dot(s, u)) * k) for s, u, k in zip(sig, devs, model.scale)
        )
        if trace is not None:
            trace.append((iters, [s.copy() for s in sig], cur_reg, resets))
        if cur_reg <= config.regret_tol:
            converged = True
            break
        if cur_reg < best_reg:
            best_reg, best_at = cur_reg, iters
        elif iters - best_at >= config.patience:
            break
        if config.snap_every and iters % config.snap_every == 0 and all(_unique_max(s) for s in sig):
            choice = [int(np.argmax(s)) for s in sig]
            if _pure_regret(model, sizes, choice) <= config.regret_tol:
                sig = [np.eye(n)[c] for n, c in zip(sizes, choice)]
                converged = True
                break
        new, r = _rd_update(sig, devs, config.step_size)
        resets += r
        iters += 1
        change = max(float(np.abs(a - b).max()) for a, b in zip(new, sig))
        sig = new
        if change < 1e-10:
            break
    prof = MixedProfile(tuple(sig))
    rep = certify(game, prof)
    prof, rep = _snap_pure(game, prof, rep)
    converged = converged or rep.max_regret <= config.regret_tol
    return prof, rep, iters, trace, converged, resets


def _support_key(prof: MixedProfile) -> int:
    return sum(len(s) for s in prof.support(1e-6))


def solve_replicator(game, config: SolverConfig | None = None) -> SolveResult:
    """Replicator dynamics from 1 + restarts initial points; keep the best run.

    Runs are compared by regret, then the total support size,
    then the lowest restart index, so every caller picks the same equilibrium.
    """
    config = config or SolverConfig()
    if isinstance(game, NormalFormGame):
        model = _NfgPayoffs(game, config.normalize)
    elif isinstance(game, RoleSymmetricGame):
        model = _RsgPayoffs(game, config.normalize)
    else:
        raise TypeError("expected a NormalFormGame or RoleSymmetricGame")
    runs = []
    if isinstance(model, _NfgPayoffs) and model.n == 2:
        for r, (sig, iters, conv, resets, trace) in enumerate(_rd_two_player_batch(model, config, game.sizes)):
            prof = MixedProfile(tuple(sig))
            rep = certify(game, prof)
            prof, rep = _snap_pure(game, prof, rep)
            conv = conv or rep.max_regret <= config.regret_tol
            runs.append((rep.max_regret, _support_key(prof), r, prof, rep, iters, trace, conv, resets))
    else:
        for r in range(config.restarts + 1):
            prof, rep, iters, trace, conv, resets = _run_replicator(game, model, config, r)
            runs.append((rep.max_regret, _support_key(prof), r, prof, rep, iters, trace, conv, resets))
    best = min(runs, key=lambda x: (x[0], x[1], x[2]))
    _, _, r, prof, rep, iters, trace, conv, resets = best
    return SolveResult(
        profile=prof,
        regret=rep,
        iterations_used=iters,
        trace=tuple(trace) if trace is not None else None,
        restart=r,
        converged=conv,
        resets=resets,
        restart_regrets=tuple(x[0] for x in runs),
    )


# ------------------------------------------------------------ fictitious play


def _fp_initial(sizes, seed):
    if seed == 0:
        return [0] * len(sizes)
    rng = np.random.default_rng(seed)
    return [int(rng.integers(n)) for n in sizes]


def _argmin_first(v):
    return int(np.flatnonzero(v == v.min())[0])


def _fp_two_player(game: NormalFormGame, config: SolverConfig):
    a = np.array(game.costs[..., 0])
    b = np.array(game.costs[..., 1]).T  # b[s2, s1]: player 2's cost
    n1, n2 = game.sizes
    cnt1, cnt2 = np.zeros(n1), np.zeros(n2)
    i1, i2 = _fp_initial(game.sizes, config.rng_seed)
    cnt1[i1] += 1
    cnt2[i2] += 1
    # running opponent-weighted cost sums (unnormalized)
    c1 = a[:, i2].copy()
    c2 = b[:, i1].copy()
    t = 1
    trace = [] if config.record_trace else None
    while t < config.max_iters:
        t_total = cnt1.sum()
        p1, p2 = cnt1 / t_total, cnt2 / t_total
        rep = regret(game, [p1, p2])
        if trace is not None:
            trace.append((t, [p1, p2], rep.max_regret, 0))
        if rep.max_regret <= config.regret_tol:
            break
        b1, b2 = _argmin_first(c1), _argmin_first(c2)
        # largest m such that b1, b2 stay the (lowest-index) best responses for m plays
        m = min(_stay(c1, a[:, b2], b1), _stay(c2, b[:, b1], b2), config.max_iters - t)
        m = max(m, 1)
        cnt1[b1] += m
        cnt2[b2] += m
        c1 += m * a[:, b2]
        c2 += m * b[:, b1]
        t += m
    return [cnt1 / cnt1.sum(), cnt2 / cnt2.sum()], t, trace


def _stay(c, slope, best):
    """Number of further steps for which ``best`` remains the first argmin of c + m*slope.

    The first step is always taken with ``best``; we return how many steps can be
    batched before another strategy could tie or overtake.
    """
    m_max = np.inf
    for s in range(c.size):
        if s == best:
            continue
        gap = c[s] - c[best]
        d = slope[s] - slope[best]
        if d >= 0:
            continue
        # after j steps the gap is gap + j*d; best must still win at step j+1
        # strict win needed for lower indices, tie allowed for higher ones
        if s < best:
            j = int(np.ceil(gap / -d)) - 1
        else:
            j = int(np.floor(gap / -d))
        # j is the count of completed steps for which best is still preferred
        m_max = min(m_max, j + 1)
    if m_max == np.inf:
        return 1 << 62
    return int(max(m_max, 1))


def _fp_general(game: NormalFormGame, config: SolverConfig):
    sizes = game.sizes
    counts = [np.zeros(n) for n in sizes]
    for i, s in enumerate(_fp_initial(sizes, config.rng_seed)):
        counts[i][s] += 1
    t = 1
    trace = [] if config.record_trace else None
    while t < config.max_iters:
        mix = [c / c.sum() for c in counts]
        rep = regret(game, mix)
        if trace is not None:
            trace.append((t, mix, rep.max_regret, 0))
        if rep.max_regret <= config.regret_tol:
            break
        choice = [_argmin_first(deviation_costs(game, i, mix)) for i in range(game.num_players)]
        for i, s in enumerate(choice):
            counts[i][s] += 1
        t += 1
    return [c / c.sum() for c in counts], t, trace


def solve_fictitious_play(game: NormalFormGame, config: SolverConfig | None = None) -> SolveResult:
    """Simultaneous fictitious play with lowest-index tie-breaking.

    For two players the best responses stay fixed between switch events, so runs
    of identical plays are applied in one step; the counts match a step-by-step
    loop. ``iterations_used`` counts individual plays.
    """
    config = config or SolverConfig(method="fictitious_play")
    if not isinstance(game, NormalFormGame):
        raise TypeError("fictitious play needs a NormalFormGame")
    if np.any(~np.isfinite(game.costs)):
        raise ValueError("fictitious play needs finite costs")
    if game.num_players == 2:
        mix, t, trace = _fp_two_player(game, config)
    else:
        mix, t, trace = _fp_general(game, config)
    prof = MixedProfile(tuple(check_mixture(m / m.sum()) for m in mix))
    rep = regret(game, prof)
    return SolveResult(
        profile=prof,
        regret=rep,
        iterations_used=int(t),
        trace=tuple(trace) if trace is not None else None,
        converged=rep.max_regret <= config.regret_tol,
    )


def solve(game, config: SolverConfig | None = None) -> SolveResult:
    config = config or SolverConfig()
    if config.method == "fictitious_play":
        return solve_fictitious_play(game, config)
    return solve_replicator(game, config)


def write_trace_csv(result: SolveResult, path, labels=None):
    """Dump a solver trace: iteration, one column per (player, strategy), regret."""
    if result.trace is None:
        raise ValueError("result has no trace; solve with record_trace=True")
    sizes = [p.size for p in result.profile]
    if labels is None:
        labels = [f"p{i}_s{j}" for i, n in enumerate(sizes) for j in range(n)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration"] + list(labels) + ["regret", "resets"])
        for it, mix, reg, resets in result.trace:
            w.writerow([it] + [repr(float(x)) for p in mix for x in p] + [repr(float(reg)), resets])
