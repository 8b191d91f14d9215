"""Seeded random programs for property tests and the fuzzing suites.

First-order programs are chains of ``let`` bindings over coin flips,
conditional tables and observations, ending in a tuple of variables.
Higher-order programs are obtained from first-order ones by expanding
bindings backwards along the reduction rules (a ``let`` bound to ``der !s``,
a beta-redex, a duplicated thunk, a pair split), so their normal forms are
known to be Bayesian networks.
"""

from __future__ import annotations

import random
from fractions import Fraction
from typing import Iterator

from hobn.syntax import uniquify
from hobn.terms import (
    App, Bang, Der, Lam, Let, LetP, Observe, Pair, Sample, Term, Var,
    count_probabilistic, free_vars, make_case,
)

PROBABILITIES = [Fraction(k, 20) for k in range(21)]


def _prob(rng: random.Random) -> Fraction:
    if rng.random() < 0.1:
        return rng.choice([Fraction(0), Fraction(1)])
    return rng.choice(PROBABILITIES[1:-1])


def _tuple(vs: list[Term]) -> Term:
    out = vs[-1]
    for v in reversed(vs[:-1]):
        out = Pair(v, out)
    return out


def _cpt(rng: random.Random, parents: list[str]) -> Term:
    if not parents:
        return Sample(_prob(rng))
    keys = [()]
    for _ in parents:
        keys = [k + (b,) for k in keys for b in (False, True)]
    table = {k: _prob(rng) for k in keys}
    return make_case(_tuple([Var(p) for p in parents]), table)


def random_first_order(rng: random.Random, max_names: int = 6, observe: bool = True) -> Term:
    """A closed first-order program with at most ``max_names`` random variables."""
    n = rng.randint(1, max_names)
    scope: list[str] = []
    observed: set[str] = set()
    bindings: list[tuple[str, Term]] = []
    made = 0
    counter = 0
    while made < n:
        counter += 1
        x = f"x{counter}"
        if observe and scope and rng.random() < 0.2:
            candidates = [y for y in scope if y not in observed]
            if candidates:
                y = rng.choice(candidates)
                observed.add(y)
                observed.add(x)
                bindings.append((x, Observe(Var(y), rng.random() < 0.5)))
                scope.append(x)
                continue
        k = rng.randint(0, min(2, len(scope)))
        parents = rng.sample(scope, k)
        bound = _cpt(rng, parents)
        made += 1
        if made < n and rng.random() < 0.2:
            # A nested binding inside the bound term.
            inner = f"i{counter}"
            k2 = rng.randint(0, min(1, len(scope)))
            bound = Let(inner, _cpt(rng, rng.sample(scope, k2)), _cpt(rng, [inner] + parents[:1]))
            made += 1
        bindings.append((x, bound))
        scope.append(x)
    k = rng.randint(1, min(3, len(scope)))
    body: Term = _tuple([Var(y) for y in rng.sample(scope, k)])
    for x, bound in reversed(bindings):
        body = Let(x, bound, body)
    return uniquify(body, force=True)


def _rename_var(t: Term, old: str, new: str) -> Term:
    from hobn.syntax import rename_free

    return rename_free(t, {old: new})


def anti_reduce(rng: random.Random, t: Term) -> Term:
    """Expand one ``let`` binding of ``t`` backwards along a reduction rule."""
    lets: list[Let] = []
    s = t
    while isinstance(s, Let):
        lets.append(s)
        s = s.body
    if not lets:
        return t
    i = rng.randrange(len(lets))
    target = lets[i]
    x, bound = target.var, target.bound
    choice = rng.randrange(5)
    fv = sorted(free_vars(bound))
    # Variables bound to thunks cannot be split out of a pair.
    thunks = {l.var for l in lets if isinstance(l.bound, Bang)}
    if choice == 0:
        new_bound: Term = Der(Bang(bound))
        replacement = Let(x, new_bound, target.body)
    elif choice == 1 and fv:
        y = rng.choice(fv)
        z = y + "_a"
        new_bound = App(Lam(z, _rename_var(bound, y, z)), Var(y))
        replacement = Let(x, new_bound, target.body)
    elif choice == 2:
        g = x + "_g"
        dup = x + "_d"
        replacement = Let(g, Bang(bound), Let(x, Der(Var(g)), Let(dup, Der(Var(g)), target.body)))
    elif choice == 3 and fv:
        y = rng.choice(fv)
        y2 = y + "_c"
        replacement = Let(y2, Var(y), Let(x, _rename_var(bound, y, y2), target.body))
    elif ground := [y for y in fv if y not in thunks]:
        y1, y2 = rng.choice(ground), rng.choice(ground)
        a, b = y1 + "_p", y2 + "_q"
        body = _rename_var(_rename_var(bound, y1, a), y2, b) if y1 != y2 else _rename_var(bound, y1, a)
        replacement = LetP(a, b, Pair(Var(y1), Var(y2)), Let(x, body, target.body))
    else:
        replacement = Let(x, Der(Bang(bound)), target.body)
    # Rebuild the chain with the replacement in place.
    out: Term = replacement
    for outer in reversed(lets[:i]):
        out = Let(outer.var, outer.bound, out)
    return out


def random_higher_order(rng: random.Random, max_names: int = 4, steps: int = 2) -> Term:
    t = random_first_order(rng, max_names, observe=rng.random() < 0.5)
    for _ in range(rng.randint(1, steps)):
        t = uniquify(anti_reduce(rng, t), force=True)
    return t


def first_order_programs(seed: int, count: int, max_names: int = 6) -> Iterator[Term]:
    rng = random.Random(seed)
    for _ in range(count):
        yield random_first_order(rng, max_names)


def higher_order_programs(seed: int, count: int, max_names: int = 3, steps: int = 2) -> Iterator[Term]:
    rng = random.Random(seed)
    for _ in range(count):
        yield random_higher_order(rng, max_names, steps)


def names_of(t: Term) -> int:
    return count_probabilistic(t)


NAME_CLASH_SOURCE = (
    "let x = (let z = sample bern(0.3) in case z of { t => sample bern(0.9); f => sample bern(0.2) }) in "
    "let y = (let w = sample bern(0.6) in case w of { t => sample bern(0.5); f => sample bern(0.1) }) in "
    "<x, y>"
)


def name_clash_derivation():
    """A derivation in which two probabilistic axioms share their main name.

    It is obtained from the correct derivation of :data:`NAME_CLASH_SOURCE`
    by giving the second coin flip the name of the first one.  The result is
    not a valid derivation, and its inductive semantics differs from the
    global one.
    """
    from hobn.syntax import load
    from hobn.types import infer_low, probabilistic_axioms, rename_names

    d = infer_low(load(NAME_CLASH_SOURCE))
    samples = [info.main.name for info in probabilistic_axioms(d) if not info.parents]
    return rename_names(d, {samples[1]: samples[0]})
