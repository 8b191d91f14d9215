"""Abstract syntax of the probabilistic lambda-bang calculus.

The same node classes serve both the surface language (where, for example,
an application may take an arbitrary term as argument) and the core
A-normal-form calculus produced by :func:`hobn.syntax.desugar`.  Whether a
term is core is a property checked by :func:`hobn.syntax.validate`, not a
separate class hierarchy.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Union


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Bool:
    value: bool


@dataclass(frozen=True)
class Pair:
    fst: "Term"
    snd: "Term"


@dataclass(frozen=True)
class Bang:
    """A thunk ``!t``; always a value."""

    body: "Term"


@dataclass(frozen=True)
class Der:
    """Dereliction ``der v``, which forces a thunk."""

    arg: "Term"


@dataclass(frozen=True)
class Lam:
    var: str
    body: "Term"


@dataclass(frozen=True)
class App:
    fun: "Term"
    arg: "Term"


@dataclass(frozen=True)
class Let:
    var: str
    bound: "Term"
    body: "Term"


@dataclass(frozen=True)
class LetP:
    """``letp <fst, snd> = scrutinee in body``."""

    fst: str
    snd: str
    scrutinee: "Term"
    body: "Term"


@dataclass(frozen=True)
class Sample:
    """``sample bern(p)``; ``p`` is the probability of true."""

    p: Fraction

    def __post_init__(self) -> None:
        if not (0 <= self.p <= 1):
            raise ValueError(f"Bernoulli parameter {self.p} outside [0, 1]")


Key = tuple[bool, ...]


@dataclass(frozen=True)
class Case:
    """A conditional probability table written as a case over a tuple.

    ``clauses`` maps every Boolean tuple (flattened, left to right) to the
    Bernoulli parameter of the sample in that branch.  It is stored as a
    sorted tuple of pairs so the node stays hashable.
    """

    scrutinee: "Term"
    clauses: tuple[tuple[Key, Fraction], ...]

    @property
    def arity(self) -> int:
        return len(self.clauses[0][0]) if self.clauses else 0

    def table(self) -> dict[Key, Fraction]:
        return dict(self.clauses)


@dataclass(frozen=True)
class Observe:
    """``obs(x = b)``: conditions on the variable ``x`` having value ``b``."""

    target: "Term"
    value: bool


# Surface-only forms, eliminated by desugaring.


@dataclass(frozen=True)
class Tuple:
    items: tuple["Term", ...]


@dataclass(frozen=True)
class LetTuple:
    """``let <x1, ..., xn> = bound in body`` with n >= 2."""

    names: tuple[str, ...]
    bound: "Term"
    body: "Term"


@dataclass(frozen=True)
class If:
    cond: "Term"
    then: "Term"
    orelse: "Term"


@dataclass(frozen=True)
class Numeral:
    value: int


Term = Union[
    Var, Bool, Pair, Bang, Der, Lam, App, Let, LetP, Sample, Case, Observe,
    Tuple, LetTuple, If, Numeral,
]

CORE_NODES = (Var, Bool, Pair, Bang, Der, Lam, App, Let, LetP, Sample, Case, Observe)


def make_case(scrutinee: Term, table: dict[Key, Fraction]) -> Case:
    return Case(scrutinee, tuple(sorted(table.items(), key=lambda kv: tuple(not b for b in kv[0]))))


def is_value(t: Term) -> bool:
    """Core values: variables, Booleans, pairs of values and thunks."""
    if isinstance(t, (Var, Bool, Bang)):
        return True
    if isinstance(t, Pair):
        return is_value(t.fst) and is_value(t.snd)
    return False


def children(t: Term) -> Iterator[Term]:
    if isinstance(t, Pair):
        yield t.fst
        yield t.snd
    elif isinstance(t, Bang):
        yield t.body
    elif isinstance(t, Der):
        yield t.arg
    elif isinstance(t, Lam):
        yield t.body
    elif isinstance(t, App):
        yield t.fun
        yield t.arg
    elif isinstance(t, (Let, LetTuple)):
        yield t.bound
        yield t.body
    elif isinstance(t, LetP):
        yield t.scrutinee
        yield t.body
    elif isinstance(t, Case):
        yield t.scrutinee
    elif isinstance(t, Observe):
        yield t.target
    elif isinstance(t, Tuple):
        yield from t.items
    elif isinstance(t, If):
        yield t.cond
        yield t.then
        yield t.orelse


def subterms(t: Term) -> Iterator[Term]:
    """All subterms in preorder, ``t`` included."""
    stack = [t]
    while stack:
        s = stack.pop()
        yield s
        stack.extend(reversed(list(children(s))))


def free_vars(t: Term) -> frozenset[str]:
    if isinstance(t, Var):
        return frozenset((t.name,))
    if isinstance(t, Lam):
        return free_vars(t.body) - {t.var}
    if isinstance(t, Let):
        return free_vars(t.bound) | (free_vars(t.body) - {t.var})
    if isinstance(t, LetP):
        return free_vars(t.scrutinee) | (free_vars(t.body) - {t.fst, t.snd})
    if isinstance(t, LetTuple):
        return free_vars(t.bound) | (free_vars(t.body) - set(t.names))
    out: frozenset[str] = frozenset()
    for c in children(t):
        out |= free_vars(c)
    return out


def binders(t: Term) -> list[str]:
    """Bound variable names in preorder (with repetitions)."""
    out: list[str] = []
    for s in subterms(t):
        if isinstance(s, (Lam, Let)):
            out.append(s.var)
        elif isinstance(s, LetP):
            out.extend((s.fst, s.snd))
        elif isinstance(s, LetTuple):
            out.extend(s.names)
    return out


def all_names(t: Term) -> set[str]:
    names = set(binders(t))
    names.update(s.name for s in subterms(t) if isinstance(s, Var))
    return names


def size(t: Term) -> int:
    return sum(1 for _ in subterms(t))


def flatten_pairs(v: Term) -> list[Term]:
    """Leaves of a right- or left-nested pair tree, left to right."""
    if isinstance(v, Pair):
        return flatten_pairs(v.fst) + flatten_pairs(v.snd)
    return [v]


def count_probabilistic(t: Term) -> int:
    return sum(1 for s in subterms(t) if isinstance(s, (Sample, Case)))
