"""Reduction at a distance and normalization to Bayesian-network normal form.

Four root rules fire under evaluation contexts ``[.] | C v | let x = C in t
| let x = u in C``.  Here ``S`` is a list of ``let``/``letp`` frames that may
separate the two interacting parts of a redex::

    db    (\\x. t)S v            ->  (t{x := v})S
    dsub  let x = (v)S in t      ->  (t{x := v})S
    der!  der !t                 ->  t
    dpair letp <x,y> = <v,w> in t ->  t{x := v}{y := w}

Substitution freshens the binders of every duplicated copy of a value, so a
term whose binders are pairwise distinct keeps that property along
reduction.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Optional, Union

from hobn.errors import FuelExhausted
from hobn.syntax import alpha_canonical, fresh_name, rename_free, substitute
from hobn.terms import (
    App, Bang, Case, Der, Lam, Let, LetP, Observe, Pair, Sample, Term, Var,
    all_names, children, free_vars, is_value,
)

DEFAULT_FUEL = 100_000
RULES = ("db", "dsub", "der!", "dpair")

Path = tuple[int, ...]


def default_fuel() -> int:
    raw = os.environ.get("HOBN_FUEL")
    if raw:
        try:
            value = int(raw)
        except ValueError:
            return DEFAULT_FUEL
        if value > 0:
            return value
    return DEFAULT_FUEL


@dataclass(frozen=True)
class RedexOccurrence:
    path: Path
    rule: str

    def __str__(self) -> str:
        where = ".".join(map(str, self.path)) or "root"
        return f"{self.rule} at {where}"


@dataclass(frozen=True)
class LetFrame:
    var: str
    bound: Term


@dataclass(frozen=True)
class LetPFrame:
    fst: str
    snd: str
    scrutinee: Term


Frame = Union[LetFrame, LetPFrame]


def peel(t: Term) -> tuple[list[Frame], Term]:
    """Split ``t`` as ``(core)S``: strip outer let/letp frames."""
    frames: list[Frame] = []
    while True:
        if isinstance(t, Let):
            frames.append(LetFrame(t.var, t.bound))
            t = t.body
        elif isinstance(t, LetP):
            frames.append(LetPFrame(t.fst, t.snd, t.scrutinee))
            t = t.body
        else:
            return frames, t


def plug(frames: list[Frame], t: Term) -> Term:
    for fr in reversed(frames):
        if isinstance(fr, LetFrame):
            t = Let(fr.var, fr.bound, t)
        else:
            t = LetP(fr.fst, fr.snd, fr.scrutinee, t)
    return t


def frame_binders(frames: list[Frame]) -> list[str]:
    out: list[str] = []
    for fr in frames:
        out.extend([fr.var] if isinstance(fr, LetFrame) else [fr.fst, fr.snd])
    return out


def root_rule(t: Term) -> Optional[str]:
    """The root rule whose left-hand side ``t`` matches, if any."""
    if isinstance(t, App):
        _, core = peel(t.fun)
        if isinstance(core, Lam) and is_value(t.arg):
            return "db"
    elif isinstance(t, Let):
        _, core = peel(t.bound)
        if is_value(core):
            return "dsub"
    elif isinstance(t, Der):
        if isinstance(t.arg, Bang):
            return "der!"
    elif isinstance(t, LetP):
        if isinstance(t.scrutinee, Pair):
            return "dpair"
    return None


def find_redexes(t: Term) -> list[RedexOccurrence]:
    """Every redex under an evaluation context, in leftmost-outermost order."""
    out: list[RedexOccurrence] = []

    def go(s: Term, path: Path) -> None:
        rule = root_rule(s)
        if rule is not None:
            out.append(RedexOccurrence(path, rule))
        if isinstance(s, App):
            go(s.fun, path + (0,))
        elif isinstance(s, Let):
            go(s.bound, path + (0,))
            go(s.body, path + (1,))

    go(t, ())
    return out


def first_redex(t: Term) -> Optional[RedexOccurrence]:
    def go(s: Term, path: Path) -> Optional[RedexOccurrence]:
        rule = root_rule(s)
        if rule is not None:
            return RedexOccurrence(path, rule)
        if isinstance(s, App):
            return go(s.fun, path + (0,))
        if isinstance(s, Let):
            return go(s.bound, path + (0,)) or go(s.body, path + (1,))
        return None

    return go(t, ())


def subterm_at(t: Term, path: Path) -> Term:
    for i in path:
        t = list(children(t))[i]
    return t


def replace_at(t: Term, path: Path, new: Term) -> Term:
    if not path:
        return new
    i, rest = path[0], path[1:]
    if isinstance(t, App) and i == 0:
        return App(replace_at(t.fun, rest, new), t.arg)
    if isinstance(t, Let):
        if i == 0:
            return Let(t.var, replace_at(t.bound, rest, new), t.body)
        return Let(t.var, t.bound, replace_at(t.body, rest, new))
    raise ValueError(f"path {path} does not follow an evaluation context")


def _protect_frames(frames: list[Frame], v: Term, body: Term, avoid: set[str]) -> tuple[list[Frame], Term]:
    """Rename frame binders that would capture free names of ``v``."""
    clash = set(frame_binders(frames)) & free_vars(v)
    if not clash:
        return frames, body
    mapping = {x: fresh_name(x, avoid) for x in sorted(clash)}
    new_frames: list[Frame] = []
    active: dict[str, str] = {}
    for fr in frames:
        if isinstance(fr, LetFrame):
            bound = rename_free(fr.bound, active)
            if fr.var in mapping:
                active = {**active, fr.var: mapping[fr.var]}
            new_frames.append(LetFrame(mapping.get(fr.var, fr.var), bound))
        else:
            scrut = rename_free(fr.scrutinee, active)
            for y in (fr.fst, fr.snd):
                if y in mapping:
                    active = {**active, y: mapping[y]}
            new_frames.append(LetPFrame(mapping.get(fr.fst, fr.fst), mapping.get(fr.snd, fr.snd), scrut))
    return new_frames, rename_free(body, active)


def contract(t: Term, rule: str, avoid: Optional[set[str]] = None) -> Term:
    """Apply ``rule`` at the root of ``t``."""
    avoid = set(all_names(t)) if avoid is None else avoid
    if rule == "db":
        assert isinstance(t, App)
        frames, lam = peel(t.fun)
        assert isinstance(lam, Lam)
        frames, body = _protect_frames(frames, t.arg, lam.body, avoid)
        return plug(frames, substitute(body, lam.var, t.arg, avoid, freshen_copies=True))
    if rule == "dsub":
        assert isinstance(t, Let)
        frames, v = peel(t.bound)
        return plug(frames, substitute(t.body, t.var, v, avoid, freshen_copies=True))
    if rule == "der!":
        assert isinstance(t, Der) and isinstance(t.arg, Bang)
        return t.arg.body
    if rule == "dpair":
        assert isinstance(t, LetP) and isinstance(t.scrutinee, Pair)
        body = substitute(t.body, t.fst, t.scrutinee.fst, avoid, freshen_copies=True)
        return substitute(body, t.snd, t.scrutinee.snd, avoid, freshen_copies=True)
    raise ValueError(f"unknown rule {rule!r}")


def step(t: Term, r: RedexOccurrence) -> Term:
    redex = subterm_at(t, r.path)
    if root_rule(redex) != r.rule:
        raise ValueError(f"no {r.rule} redex at {r.path}")
    return replace_at(t, r.path, contract(redex, r.rule, set(all_names(t))))


@dataclass
class ReductionTrace:
    initial: Term
    steps: list[tuple[RedexOccurrence, Term]] = field(default_factory=list)

    @property
    def final(self) -> Term:
        return self.steps[-1][1] if self.steps else self.initial

    @property
    def terms(self) -> list[Term]:
        return [self.initial] + [u for _, u in self.steps]

    def __len__(self) -> int:
        return len(self.steps)


def normalize(t: Term, fuel: Optional[int] = None) -> tuple[Term, ReductionTrace]:
    """Fire leftmost-outermost redexes until none is left."""
    budget = default_fuel() if fuel is None else fuel
    if budget <= 0:
        raise ValueError("fuel must be positive")
    trace = ReductionTrace(t)
    current = t
    while True:
        r = first_redex(current)
        if r is None:
            return current, trace
        if len(trace.steps) >= budget:
            raise FuelExhausted(budget, trace)
        current = step(current, r)
        trace.steps.append((r, current))


def is_normal(t: Term) -> bool:
    return first_redex(t) is None


def _is_s(t: Term) -> bool:
    if isinstance(t, (Sample, Case, Observe)):
        return True
    if isinstance(t, Let):
        return _is_s(t.bound) and _is_s(t.body)
    return False


def _is_low_value(t: Term) -> bool:
    if isinstance(t, Var):
        return True
    if isinstance(t, Pair):
        return _is_low_value(t.fst) and _is_low_value(t.snd)
    return False


def _is_n(t: Term) -> bool:
    if isinstance(t, Let):
        return _is_s(t.bound) and _is_n(t.body)
    return _is_low_value(t) or _is_s(t)


def is_bn_normal_form(t: Term) -> bool:
    """BN grammar for closed terms; low-level normal form for open ones."""
    from hobn.syntax import is_low_level

    if not is_low_level(t) or not is_normal(t):
        return False
    if free_vars(t):
        return True
    return _is_n(t)


@dataclass
class ReductionGraph:
    lengths: frozenset[int]
    normal_forms: frozenset[Term]
    states: int


def explore(t: Term, fuel: Optional[int] = None) -> ReductionGraph:
    """Exhaustively follow every redex choice (test-only; exponential)."""
    budget = default_fuel() if fuel is None else fuel
    memo: dict[Term, tuple[frozenset[int], frozenset[Term]]] = {}

    def go(s: Term, depth: int) -> tuple[frozenset[int], frozenset[Term]]:
        key = alpha_canonical(s)
        if key in memo:
            return memo[key]
        if depth > budget or len(memo) > budget:
            raise FuelExhausted(budget)
        redexes = find_redexes(s)
        if not redexes:
            result = (frozenset({0}), frozenset({key}))
        else:
            lengths: set[int] = set()
            nfs: set[Term] = set()
            for r in redexes:
                ls, ns = go(step(s, r), depth + 1)
                lengths.update(n + 1 for n in ls)
                nfs.update(ns)
            result = (frozenset(lengths), frozenset(nfs))
        memo[key] = result
        return result

    lengths, nfs = go(t, 0)
    return ReductionGraph(lengths, nfs, len(memo))


def reduction_graph(t: Term, fuel: Optional[int] = None) -> frozenset[int]:
    """Lengths of all maximal reduction sequences from ``t``."""
    return explore(t, fuel).lengths
