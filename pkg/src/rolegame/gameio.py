"""Line-based text format for finite games.

Normal-form game (costs)::

    kind nfg
    player row : R P S
    player col : R P S
    profile R R : 0.0 0.0
    profile R P : 1.0 -1.0
    ...

Role-symmetric game (payoffs); counts follow the role's strategy order and a
``-`` marks the payoff of a strategy nobody plays::

    kind rsg
    role red 2 : offense defense
    role blue 2 : offense defense
    profile 2 0 | 1 1 : 0.5 - | -0.5 0.25
    ...

Blank lines and lines starting with ``#`` are ignored. Numbers are written
with ``repr`` so load -> save -> load is value-identical.
"""
from __future__ import annotations

import itertools
from pathlib import Path

import numpy as np

from .games import NormalFormGame, RoleSymmetricGame, _enumerate


class GameFormatError(ValueError):
    def __init__(self, msg, lineno=None):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {msg}" if lineno is not None else msg)


def _num(tok: str, lineno: int) -> float:
    if tok == "-":
        return float("nan")
    try:
        return float(tok)
    except ValueError:
        raise GameFormatError(f"not a number: {tok!r}", lineno) from None


def _fmt(x: float) -> str:
    return "-" if np.isnan(x) else repr(float(x))


def _check_name(name: str):
    if not name or any(ch.isspace() for ch in name) or any(ch in name for ch in ":|#"):
        raise ValueError(f"name {name!r} cannot be written (empty, whitespace, or one of ':|#')")


def dumps(game) -> str:
    lines = []
    if isinstance(game, NormalFormGame):
        lines.append("kind nfg")
        for name, ss in zip(game.player_names, game.strategy_sets):
            for x in (name,) + ss:
                _check_name(x)
            lines.append(f"player {name} : {' '.join(ss)}")
        for prof in itertools.product(*[range(n) for n in game.sizes]):
            names = " ".join(game.strategy_sets[i][s] for i, s in enumerate(prof))
            costs = " ".join(_fmt(c) for c in game.costs[prof])
            lines.append(f"profile {names} : {costs}")
    elif isinstance(game, RoleSymmetricGame):
        lines.append("kind rsg")
        for (name, n), ss in zip(game.roles, game.role_strategy_sets):
            for x in (name,) + ss:
                _check_name(x)
            lines.append(f"role {name} {n} : {' '.join(ss)}")
        for prof, pay in zip(game.profiles, game.payoffs):
            counts = " | ".join(" ".join(str(c) for c in rc) for rc in prof)
            vals = " | ".join(" ".join(_fmt(v) for v in row) for row in pay)
            lines.append(f"profile {counts} : {vals}")
    else:
        raise TypeError("expected a NormalFormGame or RoleSymmetricGame")
    return "\n".join(lines) + "\n"


def _split(body: str, lineno: int):
    if body.count(":") != 1:
        raise GameFormatError("expected exactly one ':' separator", lineno)
    left, right = body.split(":")
    return left.split(), right.split()


def loads(text: str):
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line and not line.startswith("#"):
            rows.append((lineno, line))
    if not rows:
        raise GameFormatError("empty game file")
    lineno, first = rows[0]
    parts = first.split()
    if len(parts) != 2 or parts[0] != "kind" or parts[1] not in ("nfg", "rsg"):
        raise GameFormatError("first line must be 'kind nfg' or 'kind rsg'", lineno)
    return _load_nfg(rows[1:]) if parts[1] == "nfg" else _load_rsg(rows[1:])


def _load_nfg(rows):
    names, sets = [], []
    i = 0
    while i < len(rows) and rows[i][1].startswith("player "):
        lineno, line = rows[i]
        left, right = _split(line[len("player "):], lineno)
        if len(left) != 1 or not right:
            raise GameFormatError("player line must be 'player <name> : <strategies...>'", lineno)
        names.append(left[0])
        sets.append(tuple(right))
        i += 1
    if not sets:
        raise GameFormatError("no player lines", rows[0][0] if rows else None)
    index = [{s: k for k, s in enumerate(ss)} for ss in sets]
    shape = tuple(len(s) for s in sets) + (len(sets),)
    costs = np.full(shape, np.nan)
    seen = set()
    for lineno, line in rows[i:]:
        if not line.startswith("profile "):
            raise GameFormatError(f"unexpected line: {line!r}", lineno)
        left, right = _split(line[len("profile "):], lineno)
        if len(left) != len(sets) or len(right) != len(sets):
            raise GameFormatError(f"profile needs {len(sets)} strategies and {len(sets)} costs", lineno)
        try:
            prof = tuple(index[p][s] for p, s in enumerate(left))
        except KeyError as e:
            raise GameFormatError(f"unknown strategy {e.args[0]!r}", lineno) from None
        if prof in seen:
            raise GameFormatError("duplicate profile", lineno)
        seen.add(prof)
        vals = [_num(t, lineno) for t in right]
        if any(np.isnan(v) for v in vals):
            raise GameFormatError("normal-form costs must all be numbers", lineno)
        costs[prof] = vals
    expected = int(np.prod(shape[:-1]))
    if len(seen) != expected:
        raise GameFormatError(f"expected {expected} profiles, found {len(seen)}")
    try:
        return NormalFormGame(tuple(sets), costs, tuple(names))
    except ValueError as e:
        raise GameFormatError(str(e)) from None


def _load_rsg(rows):
    roles, sets = [], []
    i = 0
    while i < len(rows) and rows[i][1].startswith("role "):
        lineno, line = rows[i]
        left, right = _split(line[len("role "):], lineno)
        if len(left) != 2 or not right:
            raise GameFormatError("role line must be 'role <name> <count> : <strategies...>'", lineno)
        try:
            n = int(left[1])
        except ValueError:
            raise GameFormatError(f"bad player count {left[1]!r}", lineno) from None
        roles.append((left[0], n))
        sets.append(tuple(right))
        i += 1
    if not roles:
        raise GameFormatError("no role lines", rows[0][0] if rows else None)
    table = {}
    for lineno, line in rows[i:]:
        if not line.startswith("profile "):
            raise GameFormatError(f"unexpected line: {line!r}", lineno)
        body = line[len("profile "):]
        if body.count(":") != 1:
            raise GameFormatError("expected exactly one ':' separator", lineno)
        left, right = body.split(":")
        lc, rc = left.split("|"), right.split("|")
        if len(lc) != len(roles) or len(rc) != len(roles):
            raise GameFormatError(f"profile needs {len(roles)} '|'-separated groups on each side", lineno)
        prof, pay = [], []
        for r, (a, b) in enumerate(zip(lc, rc)):
            ca, vb = a.split(), b.split()
            if len(ca) != len(sets[r]) or len(vb) != len(sets[r]):
                raise GameFormatError(f"role {roles[r][0]} needs {len(sets[r])} counts and payoffs", lineno)
            try:
                prof.append(tuple(int(x) for x in ca))
            except ValueError:
                raise GameFormatError("counts must be integers", lineno) from None
            pay.append([_num(t, lineno) for t in vb])
        key = tuple(prof)
        if key in table:
            raise GameFormatError("duplicate profile", lineno)
        table[key] = (lineno, pay)
    order = _enumerate(roles, sets)
    missing = [p for p in order if p not in table]
    if missing:
        raise GameFormatError(f"missing {len(missing)} profiles, e.g. {missing[0]}")
    extra = [k for k in table if k not in set(order)]
    if extra:
        raise GameFormatError("profile with invalid counts", table[extra[0]][0])
    try:
        return RoleSymmetricGame(tuple(roles), tuple(sets), tuple(order), tuple(table[p][1] for p in order))
    except ValueError as e:
        raise GameFormatError(str(e)) from None


def save_game(game, path):
    Path(path).write_text(dumps(game))


def load_game(path):
    return loads(Path(path).read_text())
