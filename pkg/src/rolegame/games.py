"""Finite games: normal-form (cost orientation) and role-symmetric (payoff orientation).

Normal-form games store a cost tensor of shape ``(|S^1|, ..., |S^N|, N)``.
Role-symmetric games store, for every role-count profile, the payoff of each
strategy that is actually played in that profile (NaN elsewhere).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

SIMPLEX_TOL = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def check_mixture(p, size: int | None = None, name: str = "mixture") -> np.ndarray:
    """Validate one probability vector and return it as a read-only float array."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-d vector")
    if size is not None and p.size != size:
        raise ValueError(f"{name} has {p.size} entries, expected {size}")
    if not np.all(np.isfinite(p)):
        raise ValueError(f"{name} contains non-finite entries")
    if np.any(p < -SIMPLEX_TOL) or abs(p.sum() - 1.0) > SIMPLEX_TOL:
        raise ValueError(f"{name} is not on the probability simplex: {p}")
    return _frozen(p)


@dataclass(frozen=True)
class MixedProfile:
    """One probability vector per player (or per role)."""

    strategies: tuple

    def __post_init__(self):
        object.__setattr__(
            self,
            "strategies",
            tuple(check_mixture(p, name=f"component {i}") for i, p in enumerate(self.strategies)),
        )

    def __len__(self):
        return len(self.strategies)

    def __getitem__(self, i):
        return self.strategies[i]

    def __iter__(self):
        return iter(self.strategies)

    @classmethod
    def uniform(cls, sizes: Sequence[int]) -> "MixedProfile":
        return cls(tuple(np.full(n, 1.0 / n) for n in sizes))

    @classmethod
    def pure(cls, sizes: Sequence[int], choice: Sequence[int]) -> "MixedProfile":
        comps = []
        for n, c in zip(sizes, choice):
            e = np.zeros(n)
            e[c] = 1.0
            comps.append(e)
        return cls(tuple(comps))

    def support(self, tol: float = 1e-6) -> tuple:
        return tuple(tuple(int(i) for i in np.flatnonzero(p > tol)) for p in self.strategies)

    def to_list(self) -> list:
        return [p.tolist() for p in self.strategies]


@dataclass(frozen=True)
class RegretReport:
    per_player_regret: tuple
    max_regret: float

    @classmethod
    def from_values(cls, values) -> "RegretReport":
        vals = tuple(float(max(0.0, v)) for v in values)
        return cls(vals, max(vals) if vals else 0.0)


def _as_profile(profile) -> MixedProfile:
    return profile if isinstance(profile, MixedProfile) else MixedProfile(tuple(profile))


# ---------------------------------------------------------------- normal form


@dataclass(frozen=True)
class NormalFormGame:
    """N-player game with a cost for every player at every pure profile.

    ``costs[s1, ..., sN, i]`` is player i's cost. Entries may be ``+inf`` (a
    failed simulation sentinel) but never NaN or ``-inf``.
    """

    strategy_sets: tuple
    costs: np.ndarray
    player_names: tuple = ()

    def __post_init__(self):
        sets = tuple(tuple(str(s) for s in ss) for ss in self.strategy_sets)
        if not sets:
            raise ValueError("a game needs at least one player")
        for i, ss in enumerate(sets):
            if not ss:
                raise ValueError(f"player {i} has an empty strategy set")
            if len(set(ss)) != len(ss):
                raise ValueError(f"player {i} has duplicate strategy names")
        costs = np.array(self.costs, dtype=float)
        shape = tuple(len(ss) for ss in sets) + (len(sets),)
        if costs.shape != shape:
            raise ValueError(f"cost tensor has shape {costs.shape}, expected {shape}")
        if np.any(np.isnan(costs)) or np.any(costs == -np.inf):
            raise ValueError("cost tensor must not contain NaN or -inf")
        names = tuple(self.player_names) or tuple(f"p{i + 1}" for i in range(len(sets)))
        if len(names) != len(sets):
            raise ValueError("player_names length must equal the number of players")
        object.__setattr__(self, "strategy_sets", sets)
        object.__setattr__(self, "costs", _frozen(costs))
        object.__setattr__(self, "player_names", tuple(str(n) for n in names))

    @property
    def num_players(self) -> int:
        return len(self.strategy_sets)

    @property
    def sizes(self) -> tuple:
        return tuple(len(s) for s in self.strategy_sets)

    def cost(self, pure_profile: Sequence[int]) -> np.ndarray:
        return self.costs[tuple(pure_profile)]

    @classmethod
    def from_function(cls, strategy_sets, fn, player_names=()) -> "NormalFormGame":
        """Build a game by calling ``fn(profile) -> costs`` on every pure profile."""
        sizes = [len(s) for s in strategy_sets]
        costs = np.zeros(tuple(sizes) + (len(sizes),))
        for prof in itertools.product(*[range(n) for n in sizes]):
            costs[prof] = fn(prof)
        return cls(tuple(strategy_sets), costs, tuple(player_names))


def _others(game: NormalFormGame, player: int, others) -> list:
    """Normalize an opponent mixture list to one entry per player (None at ``player``)."""
    others = list(others.strategies if isinstance(others, MixedProfile) else others)
    n = game.num_players
    if len(others) == n - 1:
        others = others[:player] + [None] + others[player:]
    elif len(others) != n:
        raise ValueError(f"expected {n - 1} opponent mixtures, got {len(others)}")
    out = []
    for j, p in enumerate(others):
        out.append(None if j == player else check_mixture(p, game.sizes[j], f"player {j} mixture"))
    return out


def _check_player(game: NormalFormGame, player: int):
    if not 0 <= player < game.num_players:
        raise IndexError(f"player index {player} out of range")


def deviation_costs(game: NormalFormGame, player: int, others) -> np.ndarray:
    """Expected cost of every pure strategy of ``player`` against the others' mixtures."""
    _check_player(game, player)
    mix = _others(game, player, others)
    c = np.asarray(game.costs[..., player])
    # contract opponent axes from the last one down so axis indices stay valid
    for j in reversed(range(game.num_players)):
        if j == player:
            continue
        p = mix[j]
        with np.errstate(invalid="ignore"):
            # 0 * inf would be NaN; zero-probability strategies contribute nothing
            c = np.moveaxis(c, j, -1)
            mask = p > 0
            c = (c[..., mask] * p[mask]).sum(axis=-1)
    return np.asarray(c, dtype=float)


def expected_cost(game: NormalFormGame, player: int, strategy: int, others) -> float:
    """Exact expected cost of a pure strategy against opponent mixtures."""
    _check_player(game, player)
    if not 0 <= strategy < game.sizes[player]:
        raise IndexError(f"strategy {strategy} out of range for player {player}")
    return float(deviation_costs(game, player, others)[strategy])


def profile_cost(game: NormalFormGame, profile, player: int) -> float:
    prof = _as_profile(profile)
    if len(prof) != game.num_players:
        raise ValueError("profile length does not match the number of players")
    dev = deviation_costs(game, player, prof)
    p = prof[player]
    if p.size != dev.size:
        raise ValueError(f"player {player} mixture has the wrong size")
    mask = p > 0
    return float((dev[mask] * p[mask]).sum())


def regret(game: NormalFormGame, profile) -> RegretReport:
    prof = _as_profile(profile)
    if len(prof) != game.num_players:
        raise ValueError("profile length does not match the number of players")
    vals = []
    for i in range(game.num_players):
        dev = deviation_costs(game, i, prof)
        p = prof[i]
        if p.size != dev.size:
            raise ValueError(f"player {i} mixture has the wrong size")
        mask = p > 0
        cur = float((dev[mask] * p[mask]).sum())
        best = float(dev.min())
        vals.append(0.0 if cur == best else cur - best)
    return RegretReport.from_values(vals)


def is_nash(game: NormalFormGame, profile, eps: float) -> bool:
    if not (eps >= 0 and math.isfinite(eps)):
        raise ValueError("eps must be a finite non-negative number")
    return regret(game, profile).max_regret <= eps


def is_symmetric(game: NormalFormGame, tol: float = 0.0) -> bool:
    """Check that every player permutation maps costs consistently.

    Exhaustive over all permutations for N <= 6, adjacent transpositions otherwise
    (they generate the symmetric group).
    """
    n = game.num_players
    if any(s != game.strategy_sets[0] for s in game.strategy_sets):
        return False
    if n == 1:
        return True
    if n <= 6:
        perms = [p for p in itertools.permutations(range(n)) if list(p) != list(range(n))]
    else:
        perms = []
        for i in range(n - 1):
            p = list(range(n))
            p[i], p[i + 1] = p[i + 1], p[i]
            perms.append(tuple(p))
    c = game.costs
    for perm in perms:
        # b[s] = c[s'] where s'_{perm(i)} = s_i; player perm(i) in s' must pay what i paid in s
        b = np.transpose(c, axes=list(perm) + [n])[..., list(perm)]
        if not np.allclose(c, b, rtol=0.0, atol=tol):
            return False
    return True


# -------------------------------------------------------------- role symmetric


def _compositions(n: int, m: int) -> list:
    """All count vectors of length m summing to n, in reverse-lexicographic order.

    For n=2, m=2 this gives (2,0), (1,1), (0,2).
    """
    if m == 1:
        return [(n,)]
    out = []
    for first in range(n, -1, -1):
        for rest in _compositions(n - first, m - 1):
            out.append((first,) + rest)
    return out


def _multinomial(counts) -> int:
    total = math.factorial(sum(counts))
    for c in counts:
        total //= math.factorial(c)
    return total


@dataclass(frozen=True)
class RoleSymmetricGame:
    """Game whose players split into roles; members of a role are interchangeable.

    ``profiles[p]`` is a role-count profile, a tuple (one tuple of counts per
    role). ``payoffs[p][r][s]`` is the payoff to a role-r player using strategy s
    in that profile, NaN when the count is zero.
    """

    roles: tuple  # ((name, count), ...)
    role_strategy_sets: tuple
    profiles: tuple
    payoffs: tuple
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        roles = tuple((str(name), int(n)) for name, n in self.roles)
        sets = tuple(tuple(str(s) for s in ss) for ss in self.role_strategy_sets)
        if not roles or len(roles) != len(sets):
            raise ValueError("need one strategy set per role and at least one role")
        for (name, n), ss in zip(roles, sets):
            if n < 1:
                raise ValueError(f"role {name} must have at least one player")
            if not ss or len(set(ss)) != len(ss):
                raise ValueError(f"role {name} needs distinct, non-empty strategies")
        profiles = tuple(tuple(tuple(int(c) for c in rc) for rc in prof) for prof in self.profiles)
        payoffs = []
        index = {}
        for k, (prof, pay) in enumerate(zip(profiles, self.payoffs)):
            if len(prof) != len(roles) or len(pay) != len(roles):
                raise ValueError(f"profile {prof} does not list every role")
            row = []
            for r, ((name, n), ss) in enumerate(zip(roles, sets)):
                counts, vals = prof[r], np.array(pay[r], dtype=float)
                if len(counts) != len(ss) or vals.shape != (len(ss),):
                    raise ValueError(f"profile {prof}: role {name} has the wrong number of entries")
                if sum(counts) != n or min(counts) < 0:
                    raise ValueError(f"profile {prof}: role {name} counts must sum to {n}")
                for s, c in enumerate(counts):
                    if c > 0 and not np.isfinite(vals[s]):
                        raise ValueError(f"profile {prof}: payoff for {name}/{ss[s]} is undefined")
                vals = np.where(np.array(counts) > 0, vals, np.nan)
                row.append(_frozen(vals))
            if prof in index:
                raise ValueError(f"duplicate profile {prof}")
            index[prof] = k
            payoffs.append(tuple(row))
        expected = count_role_profiles_from(roles, sets)
        if len(profiles) != expected:
            raise ValueError(f"payoff table has {len(profiles)} profiles, expected {expected}")
        object.__setattr__(self, "roles", roles)
        object.__setattr__(self, "role_strategy_sets", sets)
        object.__setattr__(self, "profiles", profiles)
        object.__setattr__(self, "payoffs", tuple(payoffs))
        object.__setattr__(self, "_index", index)

    @property
    def num_roles(self) -> int:
        return len(self.roles)

    @property
    def sizes(self) -> tuple:
        return tuple(len(s) for s in self.role_strategy_sets)

    @property
    def role_counts(self) -> tuple:
        return tuple(n for _, n in self.roles)

    def payoff(self, profile, role: int, strategy: int) -> float:
        key = tuple(tuple(int(c) for c in rc) for rc in profile)
        return float(self.payoffs[self._index[key]][role][strategy])

    def profile_index(self, profile) -> int:
        return self._index[tuple(tuple(int(c) for c in rc) for rc in profile)]

    @classmethod
    def from_function(cls, roles, role_strategy_sets, fn) -> "RoleSymmetricGame":
        """Build the table by calling ``fn(profile) -> per-role payoff vectors``."""
        roles = tuple((str(a), int(b)) for a, b in roles)
        profs = _enumerate(roles, role_strategy_sets)
        return cls(roles, tuple(role_strategy_sets), tuple(profs), tuple(fn(p) for p in profs))

    @classmethod
    def symmetric_from_normal_form(cls, game: NormalFormGame) -> "RoleSymmetricGame":
        """Collapse a symmetric N-player game into a single role."""
        if not is_symmetric(game):
            raise ValueError("game is not symmetric")
        n, m = game.num_players, game.sizes[0]

        def fn(prof):
            counts = prof[0]
            pure = [s for s, c in enumerate(counts) for _ in range(c)]
            c = game.cost(pure)
            v = np.full(m, np.nan)
            for i, s in enumerate(pure):
                v[s] = -c[i]
            return [v]

        return cls.from_function((("all", n),), (game.strategy_sets[0],), fn)


def count_role_profiles_from(roles, role_strategy_sets) -> int:
    total = 1
    for (_, n), ss in zip(roles, role_strategy_sets):
        total *= math.comb(int(n) + len(ss) - 1, len(ss) - 1)
    return total


def count_role_profiles(game) -> int:
    """Number of distinct role-count profiles, a product of binomials over roles.

    Accepts a RoleSymmetricGame or a ``(roles, role_strategy_sets)`` pair so that
    the count can be computed without building a payoff table.
    """
    if isinstance(game, RoleSymmetricGame):
        return count_role_profiles_from(game.roles, game.role_strategy_sets)
    roles, sets = game
    return count_role_profiles_from(roles, sets)


def _enumerate(roles, role_strategy_sets) -> list:
    per_role = [_compositions(int(n), len(ss)) for (_, n), ss in zip(roles, role_strategy_sets)]
    return [tuple(p) for p in itertools.product(*per_role)]


def enumerate_role_profiles(game) -> list:
    """All role-count profiles; per role in reverse-lex order, cartesian across roles."""
    if isinstance(game, RoleSymmetricGame):
        return list(game.profiles) if _ordered(game) else _enumerate(game.roles, game.role_strategy_sets)
    roles, sets = game
    return _enumerate(roles, sets)


def _ordered(game: RoleSymmetricGame) -> bool:
    return list(game.profiles) == _enumerate(game.roles, game.role_strategy_sets)


def _check_role_mixture(game: RoleSymmetricGame, mixture) -> MixedProfile:
    prof = _as_profile(mixture)
    if len(prof) != game.num_roles:
        raise ValueError(f"expected {game.num_roles} role mixtures, got {len(prof)}")
    for r, p in enumerate(prof):
        if p.size != game.sizes[r]:
            raise ValueError(f"role {r} mixture has {p.size} entries, expected {game.sizes[r]}")
    return prof


def _role_probs(counts: np.ndarray, coefs: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Multinomial probabilities of count vectors (rows of ``counts``) under ``sigma``."""
    with np.errstate(divide="ignore"):
        pw = np.where(counts > 0, sigma[None, :] ** counts, 1.0)
    return coefs * pw.prod(axis=1)


def deviation_payoffs(game: RoleSymmetricGame, mixture) -> tuple:
    """Expected payoff of every (role, strategy) against i.i.d. play from ``mixture``.

    Returns one vector per role. Exact: sums over the role-count profiles, each
    weighted by the multinomial probability that the other players produce it.
    """
    prof = _check_role_mixture(game, mixture)
    table = _table(game)
    counts_all = table["counts"]  # per role, array (P, S_r)
    full = [_role_probs(counts_all[r], table["coef_full"][r], prof[r]) for r in range(game.num_roles)]
    full = np.array(full)  # (R, P)
    out = []
    for r in range(game.num_roles):
        others = np.prod(np.delete(full, r, axis=0), axis=0) if game.num_roles > 1 else np.ones(len(game.profiles))
        c = counts_all[r]
        sig = prof[r]
        vals = np.zeros(game.sizes[r])
        for s in range(game.sizes[r]):
            has = c[:, s] >= 1
            reduced = c[has].copy()
            reduced[:, s] -= 1
            coef = np.array([_multinomial(row) for row in reduced], dtype=float)
            w = _role_probs(reduced, coef, sig) * others[has]
            pay = table["pay"][r][has, s]
            nz = w > 0
            vals[s] = float((w[nz] * pay[nz]).sum())
        out.append(vals)
    return tuple(out)


_TABLE_CACHE: dict = {}


def _table(game: RoleSymmetricGame) -> dict:
    key = id(game)
    hit = _TABLE_CACHE.get(key)
    if hit is not None and hit["game"] is game:
        return hit
    counts = [np.array([p[r] for p in game.profiles], dtype=int) for r in range(game.num_roles)]
    coef_full = [np.array([_multinomial(row) for row in c], dtype=float) for c in counts]
    pay = [np.array([row[r] for row in game.payoffs], dtype=float) for r in range(game.num_roles)]
    hit = {"game": game, "counts": counts, "coef_full": coef_full, "pay": pay}
    if len(_TABLE_CACHE) > 64:
        _TABLE_CACHE.clear()
    _TABLE_CACHE[key] = hit
    return hit


def deviation_payoff(game: RoleSymmetricGame, role: int, strategy: int, mixture) -> float:
    if not 0 <= role < game.num_roles:
        raise IndexError(f"role index {role} out of range")
    if not 0 <= strategy < game.sizes[role]:
        raise IndexError(f"strategy {strategy} out of range for role {role}")
    return float(deviation_payoffs(game, mixture)[role][strategy])


def role_regret(game: RoleSymmetricGame, mixture) -> RegretReport:
    """Per-role regret in payoff orientation: best deviation minus current value."""
    prof = _check_role_mixture(game, mixture)
    dev = deviation_payoffs(game, prof)
    vals = []
    for r in range(game.num_roles):
        cur = float(np.dot(prof[r], dev[r]))
        best = float(dev[r].max())
        vals.append(0.0 if cur == best else best - cur)
    return RegretReport.from_values(vals)


def is_ess(game: RoleSymmetricGame, mixture, tol: float = 0.0) -> bool:
    """Strict-best-response ESS test for a single-role game.

    A pure candidate must beat every other strategy against itself by more than
    ``tol``. A mixed candidate must beat every pure strategy against each probe
    in {support pure strategies, the candidate itself}. The probe against itself
    can never be strict for an interior equilibrium, so mixed candidates fail;
    this is the literal condition, stronger than the textbook ESS.
    """
    if game.num_roles != 1:
        raise ValueError("is_ess needs a single-role (symmetric) game")
    if isinstance(mixture, MixedProfile):
        mixture = mixture.strategies[0]
    elif isinstance(mixture, (list, tuple)) and len(mixture) == 1 and np.ndim(mixture[0]) == 1:
        mixture = mixture[0]
    sig = check_mixture(mixture, game.sizes[0])
    m = game.sizes[0]
    if m == 1:
        return True
    supp = np.flatnonzero(sig > 1e-12)
    if supp.size == 1:
        s = int(supp[0])
        dev = deviation_payoffs(game, [np.eye(m)[s]])[0]
        return bool(all(dev[s] > dev[t] + tol for t in range(m) if t != s))
    probes = [np.eye(m)[i] for i in supp] + [sig]
    for q in probes:
        dev = deviation_payoffs(game, [q])[0]
        mine = float(np.dot(sig, dev))
        if not all(mine > dev[t] + tol for t in range(m)):
            return False
    return True
