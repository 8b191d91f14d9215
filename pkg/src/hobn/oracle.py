"""Brute-force reference computations with exact rational arithmetic.

Both oracles are deliberately naive and share no code with the factor
engine, so that agreement between them and the engine is meaningful.

* :func:`enumerate_worlds` runs a first-order program on every possible
  outcome of its coin flips.  It knows nothing about types.
* :func:`global_enumeration` reads a derivation literally: it enumerates
  every assignment of every axiom name, multiplies the table entries and
  marginalizes onto the conclusion's names, using plain dictionaries.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from typing import Mapping, Optional, Union

from hobn.terms import (
    Bool, Case, Let, LetP, Observe, Pair, Sample, Term, Var,
)

Value = Union[bool, tuple]
Dist = dict[Value, Fraction]
Assignment = frozenset[tuple[str, bool]]


def _flatten(v: Value) -> list[bool]:
    if isinstance(v, tuple):
        return [b for part in v for b in _flatten(part)]
    return [v]


def enumerate_worlds(t: Term, env: Optional[Mapping[str, Value]] = None) -> Dist:
    """Unnormalized output distribution of a first-order term.

    Observations that fail contribute weight zero; worlds of weight zero are
    dropped from the result.
    """

    def val(v: Term, e: Mapping[str, Value]) -> Value:
        if isinstance(v, Var):
            return e[v.name]
        if isinstance(v, Bool):
            return v.value
        if isinstance(v, Pair):
            return (val(v.fst, e), val(v.snd, e))
        raise ValueError(f"not a first-order value: {v!r}")

    def go(s: Term, e: Mapping[str, Value]) -> Dist:
        if isinstance(s, (Var, Bool, Pair)):
            return {val(s, e): Fraction(1)}
        if isinstance(s, Sample):
            return {k: w for k, w in ((True, s.p), (False, 1 - s.p)) if w}
        if isinstance(s, Case):
            key = tuple(_flatten(val(s.scrutinee, e)))
            p = dict(s.clauses)[key]
            return {k: w for k, w in ((True, p), (False, 1 - p)) if w}
        if isinstance(s, Observe):
            x = val(s.target, e)
            return {s.value: Fraction(1)} if x == s.value else {}
        if isinstance(s, Let):
            out: Dist = {}
            for a, wa in go(s.bound, e).items():
                for b, wb in go(s.body, {**e, s.var: a}).items():
                    out[b] = out.get(b, Fraction(0)) + wa * wb
            return out
        if isinstance(s, LetP):
            pair = val(s.scrutinee, e)
            assert isinstance(pair, tuple)
            return go(s.body, {**e, s.fst: pair[0], s.snd: pair[1]})
        raise ValueError(f"{type(s).__name__} is outside the first-order fragment")

    return {k: w for k, w in go(t, dict(env or {})).items() if w}


def worlds_by_names(dist: Dist, leaf_names: list[str]) -> dict[Assignment, Fraction]:
    """Re-key an output distribution by the names typing its leaves.

    Leaves sharing a name must agree in every world of positive weight.
    """
    out: dict[Assignment, Fraction] = {}
    for value, w in dist.items():
        bits = _flatten(value)
        if len(bits) != len(leaf_names):
            raise ValueError("output shape does not match the type")
        a: dict[str, bool] = {}
        for name, b in zip(leaf_names, bits):
            if a.setdefault(name, b) != b:
                raise ValueError(f"leaves named {name} disagree in a world of positive weight")
        key = frozenset(a.items())
        out[key] = out.get(key, Fraction(0)) + w
    return out


def global_enumeration(axioms: list[tuple[str, Optional[bool], list[str], dict[tuple[bool, ...], Fraction]]],
                       keep: set[str],
                       statuses: Optional[Mapping[str, Optional[bool]]] = None) -> dict[Assignment, Fraction]:
    """Marginal of the product of conditional tables, by full enumeration.

    ``axioms`` lists ``(main name, observed status, parent names, table)``;
    the table maps parent values to the probability that the main name is
    true.  ``statuses`` gives the observation status of every name (parents
    included); an observed name only takes its observed value.
    """
    status: dict[str, Optional[bool]] = dict(statuses or {})
    for name, obs, parents, _ in axioms:
        status.setdefault(name, obs)
        for p in parents:
            status.setdefault(p, None)
    names = sorted(status)
    choices = [(False, True) if status[n] is None else (status[n],) for n in names]
    out: dict[Assignment, Fraction] = {}
    for combo in itertools.product(*choices):
        a = dict(zip(names, combo))
        w = Fraction(1)
        for name, _, parents, table in axioms:
            p = table[tuple(a[q] for q in parents)]
            w *= p if a[name] else 1 - p
            if not w:
                break
        key = frozenset((n, b) for n, b in a.items() if n in keep)
        out[key] = out.get(key, Fraction(0)) + w
    return out


def derivation_axioms(d) -> list[tuple[str, Optional[bool], list[str], dict[tuple[bool, ...], Fraction]]]:
    """Axiom tuples for :func:`global_enumeration` read off a derivation."""
    from hobn.types import probabilistic_axioms

    out = []
    for info in probabilistic_axioms(d):
        out.append((info.main.name, info.main.observed, [a.name for a in info.parents], dict(info.table)))
    return out


def derivation_statuses(d) -> dict[str, Optional[bool]]:
    from hobn.types import atoms

    status: dict[str, Optional[bool]] = {}
    for _, n in d.nodes():
        j = n.judgment
        for _, a in j.lam + j.gam:
            for x in atoms(a):
                status[x.name] = x.observed
        for x in atoms(j.type):
            status[x.name] = x.observed
    return status


def oracle_global(d) -> dict[Assignment, Fraction]:
    """Literal global semantics of a derivation."""
    return global_enumeration(derivation_axioms(d), d.judgment.names(), derivation_statuses(d))


def table_distance(exact: Mapping[Assignment, Fraction], factor) -> float:
    """Largest entrywise difference between an oracle table and a factor.

    Assignments missing from the oracle count as zero; the factor's scope
    must cover exactly the names the oracle assigns.
    """
    worst = 0.0
    seen = set()
    for a, v in factor.items():
        key = frozenset(a.items())
        seen.add(key)
        worst = max(worst, abs(float(exact.get(key, Fraction(0))) - v))
    for key, w in exact.items():
        if key not in seen and w:
            return float("inf")
    return worst
