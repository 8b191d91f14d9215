"""Named intersection types, derivations, inference and derivation checking.

Types::

    K, L ::= X | X^b | L (x) L          ground types (atoms may be observed)
    P    ::= L | [A1, ..., An]          positive types (multisets)
    A    ::= P | P -o A                 types

A judgment ``Lam; Gam |- t : A`` has a ground context ``Lam`` (variables of
ground type, freely shared) and a multiset context ``Gam`` (variables of
multiset type, used linearly).  Variables mapped to the empty multiset are
omitted from ``Gam``.

First-order (low-level) terms are typed directly by :func:`infer_low`.
Higher-order terms are typed by :func:`infer_ground`, which normalizes the
term, types the normal form and then rebuilds a derivation of the original
term by expanding the reduction steps one at a time, last step first.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Any, Iterator, Mapping, Optional, Sequence, Union

from hobn.errors import InferenceError
from hobn.rewrite import (
    LetFrame, ReductionTrace, normalize, peel,
)
from hobn.syntax import alpha_mapping, parse, pretty, rename, substitute
from hobn.terms import (
    App, Bang, Bool, Case, Der, Lam, Let, LetP, Observe, Pair, Sample, Term,
    Var, children, flatten_pairs, free_vars,
)

# ---------------------------------------------------------------------------
# Types


@dataclass(frozen=True)
class Atom:
    name: str
    observed: Optional[bool] = None

    def __str__(self) -> str:
        if self.observed is None:
            return self.name
        return f"{self.name}^{'t' if self.observed else 'f'}"


@dataclass(frozen=True)
class Tensor:
    left: "IType"
    right: "IType"

    def __str__(self) -> str:
        return f"{_paren(self.left, Tensor)} * {_paren(self.right, (Tensor,), right=True)}"


@dataclass(frozen=True)
class Multiset:
    items: tuple["IType", ...] = ()

    def __str__(self) -> str:
        return "[" + ", ".join(map(str, self.items)) + "]"


@dataclass(frozen=True)
class Arrow:
    arg: "IType"
    res: "IType"

    def __str__(self) -> str:
        return f"{_paren(self.arg, (Arrow, Tensor))} -o {self.res}"


IType = Union[Atom, Tensor, Multiset, Arrow]

EMPTY = Multiset(())


def _paren(t: IType, kinds: Any, right: bool = False) -> str:
    kinds = kinds if isinstance(kinds, tuple) else (kinds,)
    if isinstance(t, Arrow) or (isinstance(t, kinds) and not right):
        return f"({t})"
    return str(t)


def is_ground(t: IType) -> bool:
    if isinstance(t, Atom):
        return True
    if isinstance(t, Tensor):
        return is_ground(t.left) and is_ground(t.right)
    return False


def is_positive(t: IType) -> bool:
    return is_ground(t) or isinstance(t, Multiset)


def is_type(t: IType) -> bool:
    if isinstance(t, (Atom, Tensor)):
        return is_ground(t)
    if isinstance(t, Multiset):
        return all(is_type(a) for a in t.items)
    if isinstance(t, Arrow):
        return is_positive(t.arg) and is_type(t.arg) and is_type(t.res)
    return False


def atoms(t: IType) -> Iterator[Atom]:
    """Atom occurrences in left-to-right order."""
    if isinstance(t, Atom):
        yield t
    elif isinstance(t, Tensor):
        yield from atoms(t.left)
        yield from atoms(t.right)
    elif isinstance(t, Multiset):
        for a in t.items:
            yield from atoms(a)
    elif isinstance(t, Arrow):
        yield from atoms(t.arg)
        yield from atoms(t.res)


def type_names(t: IType) -> set[str]:
    return {a.name for a in atoms(t)}


def map_atoms(t: IType, f: Any) -> IType:
    if isinstance(t, Atom):
        return f(t)
    if isinstance(t, Tensor):
        return Tensor(map_atoms(t.left, f), map_atoms(t.right, f))
    if isinstance(t, Multiset):
        return Multiset(tuple(map_atoms(a, f) for a in t.items))
    return Arrow(map_atoms(t.arg, f), map_atoms(t.res, f))


def canonical_type(t: IType) -> IType:
    """Sort multiset items so that equality ignores their order."""
    if isinstance(t, Atom):
        return t
    if isinstance(t, Tensor):
        return Tensor(canonical_type(t.left), canonical_type(t.right))
    if isinstance(t, Multiset):
        return Multiset(tuple(sorted((canonical_type(a) for a in t.items), key=repr)))
    return Arrow(canonical_type(t.arg), canonical_type(t.res))


def type_eq(a: IType, b: IType) -> bool:
    return a == b or canonical_type(a) == canonical_type(b)


def tensor_of(types: Sequence[IType]) -> IType:
    out = types[-1]
    for t in reversed(types[:-1]):
        out = Tensor(t, out)
    return out


def ground_leaves(t: IType) -> list[Atom]:
    return list(atoms(t))


def type_to_json(t: IType) -> Any:
    if isinstance(t, Atom):
        return {"atom": t.name, "observed": t.observed}
    if isinstance(t, Tensor):
        return {"tensor": [type_to_json(t.left), type_to_json(t.right)]}
    if isinstance(t, Multiset):
        return {"multiset": [type_to_json(a) for a in t.items]}
    return {"arrow": [type_to_json(t.arg), type_to_json(t.res)]}


def type_from_json(data: Any) -> IType:
    if "atom" in data:
        return Atom(data["atom"], data.get("observed"))
    if "tensor" in data:
        a, b = data["tensor"]
        return Tensor(type_from_json(a), type_from_json(b))
    if "multiset" in data:
        return Multiset(tuple(type_from_json(a) for a in data["multiset"]))
    a, b = data["arrow"]
    return Arrow(type_from_json(a), type_from_json(b))


# ---------------------------------------------------------------------------
# Contexts, judgments and derivations

Ctx = tuple[tuple[str, IType], ...]


def ctx(mapping: Mapping[str, IType]) -> Ctx:
    return tuple(sorted(mapping.items()))


def multiset_union(*gams: Mapping[str, IType]) -> dict[str, IType]:
    """Union of multiset contexts, concatenating items in argument order."""
    out: dict[str, list[IType]] = {}
    for g in gams:
        for x, m in g.items():
            assert isinstance(m, Multiset)
            out.setdefault(x, []).extend(m.items)
    return {x: Multiset(tuple(items)) for x, items in out.items() if items}


@dataclass(frozen=True)
class Judgment:
    lam: Ctx
    gam: Ctx
    subject: Term
    type: IType

    @property
    def lam_map(self) -> dict[str, IType]:
        return dict(self.lam)

    @property
    def gam_map(self) -> dict[str, IType]:
        return dict(self.gam)

    def names(self) -> set[str]:
        out = type_names(self.type)
        for _, a in self.lam + self.gam:
            out |= type_names(a)
        return out

    def __str__(self) -> str:
        lam = ", ".join(f"{x}:{a}" for x, a in self.lam)
        gam = ", ".join(f"{x}:{a}" for x, a in self.gam)
        return f"{lam}; {gam} |- {_one_line(self.subject)} : {self.type}"


def _one_line(t: Term) -> str:
    return " ".join(pretty(t).split())


PROBABILISTIC = ("i-sample", "i-cond")
AXIOMS = ("i-sample", "i-cond", "i-obs", "i-var")
RULES = (
    "i-sample", "i-cond", "i-obs", "i-var", "i-let", "i-pair", "i-letp",
    "i-abs", "i-app", "i-bang", "i-der",
)


@dataclass(frozen=True)
class Derivation:
    rule: str
    judgment: Judgment
    premises: tuple["Derivation", ...] = ()

    # -- convenient views ----------------------------------------------------
    @property
    def subject(self) -> Term:
        return self.judgment.subject

    @property
    def type(self) -> IType:
        return self.judgment.type

    @property
    def lam(self) -> dict[str, IType]:
        return dict(self.judgment.lam)

    @property
    def gam(self) -> dict[str, IType]:
        return dict(self.judgment.gam)

    @property
    def main_name(self) -> Optional[str]:
        if self.rule in PROBABILISTIC:
            assert isinstance(self.type, Atom)
            return self.type.name
        return None

    def nodes(self) -> Iterator[tuple[tuple[int, ...], "Derivation"]]:
        """All nodes in preorder with their premise-index paths."""
        stack: list[tuple[tuple[int, ...], Derivation]] = [((), self)]
        while stack:
            path, d = stack.pop()
            yield path, d
            for i in range(len(d.premises) - 1, -1, -1):
                stack.append((path + (i,), d.premises[i]))

    def at(self, path: Sequence[int]) -> "Derivation":
        d = self
        for i in path:
            d = d.premises[i]
        return d

    def axioms(self) -> list["Derivation"]:
        return [d for _, d in self.nodes() if d.rule in PROBABILISTIC]

    def names(self) -> set[str]:
        out: set[str] = set()
        for _, d in self.nodes():
            out |= d.judgment.names()
        return out

    def size(self) -> int:
        return sum(1 for _ in self.nodes())

    def with_premises(self, premises: Sequence["Derivation"]) -> "Derivation":
        return Derivation(self.rule, self.judgment, tuple(premises))

    # -- printing ------------------------------------------------------------
    def to_text(self, annotate: Optional[Mapping[tuple[int, ...], str]] = None) -> str:
        lines = []
        for path, d in self.nodes():
            note = f"  [{annotate[path]}]" if annotate and path in annotate else ""
            lines.append(f"{'  ' * len(path)}{d.rule}  {d.judgment}{note}")
        return "\n".join(lines)

    def __str__(self) -> str:
        return self.to_text()

    def to_json(self) -> dict:
        j = self.judgment
        return {
            "rule": self.rule,
            "judgment": {
                "lam": {x: type_to_json(a) for x, a in j.lam},
                "gam": {x: type_to_json(a) for x, a in j.gam},
                "subject": pretty(j.subject),
                "type": type_to_json(j.type),
            },
            "premises": [p.to_json() for p in self.premises],
        }

    def dumps(self, indent: Optional[int] = 2) -> str:
        return json.dumps(self.to_json(), indent=indent)

    @classmethod
    def from_json(cls, data: Mapping) -> "Derivation":
        j = data["judgment"]
        judgment = Judgment(
            ctx({x: type_from_json(a) for x, a in j.get("lam", {}).items()}),
            ctx({x: type_from_json(a) for x, a in j.get("gam", {}).items()}),
            parse(j["subject"], core=True),
            type_from_json(j["type"]),
        )
        return cls(data["rule"], judgment, tuple(cls.from_json(p) for p in data.get("premises", [])))


def node(rule: str, lam: Mapping[str, IType], gam: Mapping[str, IType], subject: Term,
         type_: IType, premises: Sequence[Derivation] = ()) -> Derivation:
    return Derivation(rule, Judgment(ctx(lam), ctx({x: m for x, m in gam.items() if m != EMPTY}), subject, type_), tuple(premises))


# ---------------------------------------------------------------------------
# First-order inference


class _NameSupply:
    def __init__(self, avoid: set[str]) -> None:
        self.avoid = set(avoid)
        self.k = 0

    def fresh(self) -> str:
        while True:
            self.k += 1
            name = f"X{self.k}"
            if name not in self.avoid:
                self.avoid.add(name)
                return name


def _ctx_names(lam: Mapping[str, IType]) -> set[str]:
    out: set[str] = set()
    for a in lam.values():
        out |= type_names(a)
    return out


def infer_low(t: Term, context: Optional[Mapping[str, IType]] = None) -> Derivation:
    """The general derivation of a low-level term in a ground context.

    Main names are minted as ``X1, X2, ...`` in preorder of the probabilistic
    axioms, skipping names already used by ``context``.  Observed atoms
    appear exactly for the names of variables that are observed; their status
    is propagated to every occurrence, context entries included.
    """
    lam0 = dict(context or {})
    for x, a in lam0.items():
        if not is_ground(a):
            raise InferenceError(f"context entry {x}:{a} is not ground")
    supply = _NameSupply(_ctx_names(lam0))
    observed: dict[str, bool] = {}

    def go(s: Term, lam: dict[str, IType]) -> Derivation:
        if isinstance(s, Var):
            if s.name not in lam:
                raise InferenceError(f"variable {s.name} has no ground type")
            return node("i-var", lam, {}, s, lam[s.name])
        if isinstance(s, Bool):
            raise InferenceError("Boolean constants are not typable")
        if isinstance(s, Pair):
            p1, p2 = go(s.fst, lam), go(s.snd, lam)
            return node("i-pair", lam, {}, s, Tensor(p1.type, p2.type), (p1, p2))
        if isinstance(s, Sample):
            return node("i-sample", lam, {}, s, Atom(supply.fresh()))
        if isinstance(s, Case):
            leaves = flatten_pairs(s.scrutinee)
            if len(leaves) != s.arity:
                raise InferenceError(f"case over {len(leaves)} values but clauses of arity {s.arity}")
            for leaf in leaves:
                if not isinstance(leaf, Var) or not isinstance(lam.get(leaf.name), Atom):
                    raise InferenceError(f"case scrutinee component {pretty(leaf)} is not a variable of atomic type")
            return node("i-cond", lam, {}, s, Atom(supply.fresh()))
        if isinstance(s, Observe):
            if not isinstance(s.target, Var) or not isinstance(lam.get(s.target.name), Atom):
                raise InferenceError(f"observed {pretty(s.target)} is not a variable of atomic type")
            a = lam[s.target.name]
            assert isinstance(a, Atom)
            if observed.setdefault(a.name, s.value) != s.value:
                raise InferenceError(f"name {a.name} is observed both true and false")
            return node("i-obs", lam, {}, s, a)
        if isinstance(s, Let):
            pu = go(s.bound, lam)
            pt = go(s.body, {**lam, s.var: pu.type})
            return node("i-let", lam, {}, s, pt.type, (pu, pt))
        if isinstance(s, LetP):
            pv = go(s.scrutinee, lam)
            if not isinstance(pv.type, Tensor):
                raise InferenceError(f"letp destructures {pretty(s.scrutinee)} of non-tensor type {pv.type}")
            pt = go(s.body, {**lam, s.fst: pv.type.left, s.snd: pv.type.right})
            return node("i-letp", lam, {}, s, pt.type, (pv, pt))
        raise InferenceError(f"{type(s).__name__} is not part of the first-order fragment")

    d = go(t, lam0)
    if not observed:
        return d
    return _set_observations(d, observed)


def _set_observations(d: Derivation, status: Mapping[str, Optional[bool]]) -> Derivation:
    def f(a: Atom) -> Atom:
        return Atom(a.name, status[a.name]) if a.name in status else a

    return map_derivation_types(d, lambda t: map_atoms(t, f))


def map_derivation_types(d: Derivation, f: Any) -> Derivation:
    j = d.judgment
    judgment = Judgment(
        tuple((x, f(a)) for x, a in j.lam),
        tuple((x, f(a)) for x, a in j.gam),
        j.subject,
        f(j.type),
    )
    return Derivation(d.rule, judgment, tuple(map_derivation_types(p, f) for p in d.premises))


def rename_names(d: Derivation, mapping: Mapping[str, str]) -> Derivation:
    """Rename atom names throughout a derivation."""
    return map_derivation_types(d, lambda t: map_atoms(t, lambda a: Atom(mapping.get(a.name, a.name), a.observed)))


def rename_variables(d: Derivation, mapping: Mapping[str, str]) -> Derivation:
    """Rename term variables in subjects and contexts."""
    if not mapping:
        return d
    j = d.judgment
    judgment = Judgment(
        ctx({mapping.get(x, x): a for x, a in j.lam}),
        ctx({mapping.get(x, x): a for x, a in j.gam}),
        rename(j.subject, dict(mapping)),
        j.type,
    )
    return Derivation(d.rule, judgment, tuple(rename_variables(p, mapping) for p in d.premises))


def canonical_names(d: Derivation) -> Derivation:
    """Rename atoms to ``N1, N2, ...`` in order of first occurrence (preorder)."""
    order: dict[str, str] = {}
    for _, n in d.nodes():
        j = n.judgment
        for a in itertools.chain(*(atoms(t) for _, t in j.lam + j.gam), atoms(j.type)):
            order.setdefault(a.name, f"N{len(order) + 1}")
    return rename_names(d, order)


# ---------------------------------------------------------------------------
# Checking


@dataclass(frozen=True)
class CheckFailure:
    path: tuple[int, ...]
    message: str

    def __str__(self) -> str:
        where = ".".join(map(str, self.path)) or "root"
        return f"at node {where}: {self.message}"


def _gam_eq(a: Mapping[str, IType], b: Mapping[str, IType]) -> bool:
    a = {x: m for x, m in a.items() if m != EMPTY}
    b = {x: m for x, m in b.items() if m != EMPTY}
    return a.keys() == b.keys() and all(type_eq(a[x], b[x]) for x in a)


def _lam_eq(a: Mapping[str, IType], b: Mapping[str, IType]) -> bool:
    return a.keys() == b.keys() and all(a[x] == b[x] for x in a)


def _check_node(d: Derivation) -> Optional[str]:
    j = d.judgment
    lam, gam, s, a = d.lam, d.gam, j.subject, j.type
    ps = d.premises
    if len(set(lam)) != len(j.lam) or len(set(gam)) != len(j.gam):
        return "duplicate context entries"
    if set(lam) & set(gam):
        return "a variable occurs in both contexts"
    for x, b in lam.items():
        if not is_ground(b):
            return f"ground context entry {x}:{b} is not ground"
    for x, b in gam.items():
        if not isinstance(b, Multiset) or not is_type(b):
            return f"multiset context entry {x}:{b} is not a multiset type"
    if not is_type(a):
        return f"{a} is not a well-formed type"

    def premises(n: Optional[int] = None) -> Optional[str]:
        if n is not None and len(ps) != n:
            return f"{d.rule} needs {n} premises, found {len(ps)}"
        return None

    rule = d.rule
    if rule not in RULES:
        return f"unknown rule {rule}"
    if rule == "i-var":
        if not isinstance(s, Var):
            return "i-var subject is not a variable"
        if (err := premises(0)):
            return err
        x = s.name
        if is_ground(a):
            if gam:
                return "i-var with ground type needs an empty multiset context"
            if lam.get(x) != a:
                return f"ground context does not give {x} the type {a}"
            return None
        if not isinstance(a, Multiset):
            return "i-var type must be positive"
        if x in lam:
            return f"{x} is ground in the context but typed with a multiset"
        if not _gam_eq(gam, {x: a}):
            return f"multiset context must be exactly {x}:{a}"
        return None
    if rule == "i-sample":
        if not isinstance(s, Sample) or not isinstance(a, Atom):
            return "i-sample must type a sample with an atom"
        if (err := premises(0)) or gam:
            return err or "i-sample needs an empty multiset context"
        if a.name in _ctx_names(lam):
            return f"main name {a.name} already occurs in the ground context"
        return None
    if rule == "i-cond":
        if not isinstance(s, Case) or not isinstance(a, Atom):
            return "i-cond must type a case with an atom"
        if (err := premises(0)) or gam:
            return err or "i-cond needs an empty multiset context"
        leaves = flatten_pairs(s.scrutinee)
        if len(leaves) != s.arity:
            return "case scrutinee does not match the clause arity"
        for leaf in leaves:
            if not isinstance(leaf, Var) or not isinstance(lam.get(leaf.name), Atom):
                return f"case component {pretty(leaf)} is not an atomic variable"
            if lam[leaf.name].name == a.name:  # type: ignore[union-attr]
                return f"main name {a.name} is also a parent"
        if a.name in _ctx_names(lam):
            return f"main name {a.name} already occurs in the ground context"
        return None
    if rule == "i-obs":
        if not isinstance(s, Observe) or not isinstance(s.target, Var):
            return "i-obs must type an observe of a variable"
        if (err := premises(0)) or gam:
            return err or "i-obs needs an empty multiset context"
        want = lam.get(s.target.name)
        if not isinstance(want, Atom) or want.observed != s.value or a != want:
            return f"i-obs needs {s.target.name} of observed type with value {'t' if s.value else 'f'}"
        return None
    if rule == "i-let":
        if not isinstance(s, Let) or (err := premises(2)):
            return "i-let shape mismatch"
        pu, pt = ps
        if pu.subject != s.bound or pt.subject != s.body:
            return "i-let premise subjects do not match"
        p = pu.type
        if not is_positive(p):
            return f"let-bound term has non-positive type {p}"
        if not _lam_eq(pu.lam, lam):
            return "i-let left premise changes the ground context"
        if s.var in lam or s.var in gam:
            return f"bound variable {s.var} already in the context"
        if is_ground(p):
            if not _lam_eq(pt.lam, {**lam, s.var: p}) or s.var in pt.gam:
                return f"right premise must have {s.var}:{p} in its ground context"
            body_gam = pt.gam
        else:
            if not _lam_eq(pt.lam, lam):
                return "i-let right premise changes the ground context"
            if not type_eq(pt.gam.get(s.var, EMPTY), p):
                return f"right premise types {s.var} with {pt.gam.get(s.var, EMPTY)}, expected {p}"
            body_gam = {x: m for x, m in pt.gam.items() if x != s.var}
        if not _gam_eq(gam, multiset_union(pu.gam, body_gam)):
            return "multiset context is not the union of the premises'"
        if not type_eq(a, pt.type):
            return "i-let type differs from the body type"
        return None
    if rule == "i-pair":
        if not isinstance(s, Pair) or (err := premises(2)):
            return "i-pair shape mismatch"
        p1, p2 = ps
        if p1.subject != s.fst or p2.subject != s.snd:
            return "i-pair premise subjects do not match"
        if gam or p1.gam or p2.gam:
            return "i-pair needs empty multiset contexts"
        if not (_lam_eq(p1.lam, lam) and _lam_eq(p2.lam, lam)):
            return "i-pair premises change the ground context"
        if not (is_ground(p1.type) and is_ground(p2.type)) or a != Tensor(p1.type, p2.type):
            return "i-pair type must be the tensor of ground premise types"
        return None
    if rule == "i-letp":
        if not isinstance(s, LetP) or (err := premises(2)):
            return "i-letp shape mismatch"
        pv, pt = ps
        if pv.subject != s.scrutinee or pt.subject != s.body:
            return "i-letp premise subjects do not match"
        if pv.gam or not _lam_eq(pv.lam, lam):
            return "i-letp scrutinee must be typed in the ground context only"
        if not isinstance(pv.type, Tensor) or not is_ground(pv.type):
            return "i-letp scrutinee must have a ground tensor type"
        if s.fst in lam or s.snd in lam or s.fst == s.snd:
            return "i-letp binders clash with the context"
        if not _lam_eq(pt.lam, {**lam, s.fst: pv.type.left, s.snd: pv.type.right}):
            return "i-letp body context must extend the ground context with the components"
        if not _gam_eq(gam, pt.gam) or not type_eq(a, pt.type):
            return "i-letp conclusion differs from the body"
        return None
    if rule == "i-abs":
        if not isinstance(s, Lam) or (err := premises(1)):
            return "i-abs shape mismatch"
        (pt,) = ps
        if pt.subject != s.body or not isinstance(a, Arrow):
            return "i-abs must type an abstraction with an arrow"
        p = a.arg
        if s.var in lam or s.var in gam:
            return f"bound variable {s.var} already in the context"
        if is_ground(p):
            if not _lam_eq(pt.lam, {**lam, s.var: p}) or s.var in pt.gam:
                return f"premise must have {s.var}:{p} in its ground context"
            body_gam = pt.gam
        else:
            if not _lam_eq(pt.lam, lam):
                return "i-abs premise changes the ground context"
            if not type_eq(pt.gam.get(s.var, EMPTY), p):
                return f"premise types {s.var} with {pt.gam.get(s.var, EMPTY)}, expected {p}"
            body_gam = {x: m for x, m in pt.gam.items() if x != s.var}
        if not _gam_eq(gam, body_gam) or not type_eq(a.res, pt.type):
            return "i-abs conclusion does not match its premise"
        return None
    if rule == "i-app":
        if not isinstance(s, App) or (err := premises(2)):
            return "i-app shape mismatch"
        pf, pv = ps
        if pf.subject != s.fun or pv.subject != s.arg:
            return "i-app premise subjects do not match"
        if not isinstance(pf.type, Arrow) or not type_eq(pf.type.arg, pv.type):
            return "i-app argument type does not match the function"
        if not (_lam_eq(pf.lam, lam) and _lam_eq(pv.lam, lam)):
            return "i-app premises change the ground context"
        if not _gam_eq(gam, multiset_union(pf.gam, pv.gam)) or not type_eq(a, pf.type.res):
            return "i-app conclusion does not match its premises"
        return None
    if rule == "i-bang":
        if not isinstance(s, Bang) or not isinstance(a, Multiset):
            return "i-bang must type a thunk with a multiset"
        if len(ps) != len(a.items):
            return "i-bang needs one premise per multiset item"
        for p, item in zip(ps, a.items):
            if p.subject != s.body or not type_eq(p.type, item):
                return "i-bang premise does not match its multiset item"
            if not _lam_eq(p.lam, lam):
                return "i-bang premise changes the ground context"
        if not _gam_eq(gam, multiset_union(*(p.gam for p in ps))):
            return "multiset context is not the union of the premises'"
        return None
    if rule == "i-der":
        if not isinstance(s, Der) or (err := premises(1)):
            return "i-der shape mismatch"
        (pv,) = ps
        if pv.subject != s.arg or not isinstance(pv.type, Multiset) or len(pv.type.items) != 1:
            return "i-der premise must type the argument with a singleton multiset"
        if not _lam_eq(pv.lam, lam) or not _gam_eq(gam, pv.gam) or not type_eq(a, pv.type.items[0]):
            return "i-der conclusion does not match its premise"
        return None
    return f"unknown rule {rule}"


def check_diagnostic(d: Derivation) -> Optional[CheckFailure]:
    """First violated condition (preorder), or ``None`` for a valid derivation."""
    status: dict[str, Optional[bool]] = {}
    mains: dict[str, tuple[int, ...]] = {}
    for path, n in d.nodes():
        err = _check_node(n)
        if err:
            return CheckFailure(path, err)
        j = n.judgment
        for a in itertools.chain(*(atoms(t) for _, t in j.lam + j.gam), atoms(j.type)):
            if status.setdefault(a.name, a.observed) != a.observed:
                return CheckFailure(path, f"name {a.name} occurs with different observation status")
        main = n.main_name
        if main is not None:
            if main in mains:
                return CheckFailure(path, f"main name {main} is introduced twice")
            mains[main] = path
    return None


def check(d: Derivation) -> bool:
    return check_diagnostic(d) is None


# ---------------------------------------------------------------------------
# Generalization and measure


def observed_by_rule(d: Derivation) -> set[str]:
    return {n.type.name for _, n in d.nodes() if n.rule == "i-obs"}  # type: ignore[union-attr]


def generalize(d: Derivation) -> Derivation:
    """Make unobserved every atom that no observe construct forces."""
    keep = observed_by_rule(d)

    def f(a: Atom) -> Atom:
        return a if a.observed is None or a.name in keep else Atom(a.name)

    return map_derivation_types(d, lambda t: map_atoms(t, f))


MEASURE_WEIGHTS = {"i-let": 1, "i-der": 1, "i-app": 2, "i-letp": 3}


def measure(d: Derivation) -> int:
    return sum(MEASURE_WEIGHTS.get(n.rule, 0) for _, n in d.nodes())


def is_first_order(d: Derivation) -> bool:
    return all(n.rule not in ("i-abs", "i-app", "i-bang", "i-der") for _, n in d.nodes())


@dataclass(frozen=True)
class AxiomInfo:
    """A probabilistic axiom: main atom, parent atoms and its parameters."""

    path: tuple[int, ...]
    main: Atom
    parents: tuple[Atom, ...]
    table: tuple[tuple[tuple[bool, ...], Fraction], ...]


def axiom_info(d: Derivation, path: tuple[int, ...] = ()) -> AxiomInfo:
    s, a = d.subject, d.type
    assert isinstance(a, Atom)
    if isinstance(s, Sample):
        return AxiomInfo(path, a, (), (((), s.p),))
    assert isinstance(s, Case)
    lam = d.lam
    parents = tuple(lam[leaf.name] for leaf in flatten_pairs(s.scrutinee))  # type: ignore[union-attr]
    return AxiomInfo(path, a, parents, s.clauses)  # type: ignore[arg-type]


def probabilistic_axioms(d: Derivation) -> list[AxiomInfo]:
    return [axiom_info(n, p) for p, n in d.nodes() if n.rule in PROBABILISTIC]


# ---------------------------------------------------------------------------
# Context reconstruction


def recontext(d: Derivation, lam: Mapping[str, IType]) -> Derivation:
    """Recompute every context from the root ground context.

    Ground contexts flow top-down (extended by ground-typed binders);
    multiset contexts flow bottom-up from the variable axioms.  Subjects,
    types and rules are kept.
    """
    lam = dict(lam)
    s, a, rule = d.subject, d.type, d.rule
    ps = d.premises
    if rule == "i-var":
        assert isinstance(s, Var)
        gam = {s.name: a} if isinstance(a, Multiset) and a.items else {}
        return node(rule, lam, gam, s, a)
    if rule in ("i-sample", "i-cond", "i-obs"):
        return node(rule, lam, {}, s, a)
    if rule == "i-let":
        assert isinstance(s, Let)
        pu = recontext(ps[0], lam)
        inner = {**lam, s.var: pu.type} if is_ground(pu.type) else {k: v for k, v in lam.items() if k != s.var}
        pt = recontext(ps[1], inner)
        body_gam = {x: m for x, m in pt.gam.items() if x != s.var}
        return node(rule, lam, multiset_union(pu.gam, body_gam), s, a, (pu, pt))
    if rule == "i-letp":
        assert isinstance(s, LetP)
        pv = recontext(ps[0], lam)
        tv = pv.type
        if not isinstance(tv, Tensor):
            raise InferenceError("letp scrutinee lost its tensor type")
        pt = recontext(ps[1], {**lam, s.fst: tv.left, s.snd: tv.right})
        return node(rule, lam, pt.gam, s, a, (pv, pt))
    if rule == "i-abs":
        assert isinstance(s, Lam) and isinstance(a, Arrow)
        inner = {**lam, s.var: a.arg} if is_ground(a.arg) else {k: v for k, v in lam.items() if k != s.var}
        pt = recontext(ps[0], inner)
        return node(rule, lam, {x: m for x, m in pt.gam.items() if x != s.var}, s, a, (pt,))
    new = tuple(recontext(p, lam) for p in ps)
    return node(rule, lam, multiset_union(*(p.gam for p in new)), s, a, new)


# ---------------------------------------------------------------------------
# Subject expansion


def _occurrence(lam: Mapping[str, IType], v: Term) -> Derivation:
    """Derivation of a variable occurring in an axiom (case parent or observe)."""
    assert isinstance(v, Var)
    return node("i-var", lam, {}, v, lam[v.name])


class _AntiSubst:
    """Undo ``t{x := v}`` on a derivation, collecting the typings of ``v``."""

    def __init__(self, x: str, v: Term) -> None:
        self.x = x
        self.v = v
        self.occurrences: list[Derivation] = []

    def run(self, t: Term, d: Derivation) -> Derivation:
        x = self.x
        if isinstance(t, Var) and t.name == x:
            self.occurrences.append(self._align(d))
            return node("i-var", {}, {}, t, d.type)
        if x not in free_vars(t):
            return d
        rule, ps = d.rule, d.premises
        if rule in ("i-cond", "i-obs"):
            # The substituted value is a variable in an axiom's subject.
            if isinstance(t, Case):
                sub_leaves = flatten_pairs(d.subject.scrutinee)  # type: ignore[union-attr]
                leaves = flatten_pairs(t.scrutinee)
                if len(sub_leaves) != len(leaves):
                    raise InferenceError("cannot expand a case whose scrutinee changes shape")
                for leaf, sub in zip(leaves, sub_leaves):
                    if isinstance(leaf, Var) and leaf.name == x:
                        self.occurrences.append(_occurrence(d.lam, sub))
            else:
                assert isinstance(t, Observe)
                self.occurrences.append(_occurrence(d.lam, d.subject.target))  # type: ignore[union-attr]
            return Derivation(rule, replace(d.judgment, subject=t), ())
        kids = list(children(t))
        if rule == "i-bang":
            new = tuple(self.run(kids[0], p) for p in ps)
        elif rule == "i-var":
            raise InferenceError("substituted occurrence does not line up with the derivation")
        else:
            if len(kids) != len(ps):
                raise InferenceError(f"{rule} does not line up with {type(t).__name__}")
            new = tuple(self.run(k, p) for k, p in zip(kids, ps))
        return Derivation(rule, replace(d.judgment, subject=t), new)

    def _align(self, d: Derivation) -> Derivation:
        """Rename the binders of a (possibly freshened) copy back to ``v``'s."""
        if d.subject == self.v:
            return d
        mapping = alpha_mapping(d.subject, self.v)
        if mapping is None:
            raise InferenceError("substituted occurrence is not a copy of the value")
        return rename_variables(d, mapping)


def _default_value_derivation(v: Term, lam: Mapping[str, IType]) -> Derivation:
    """Typing of an erased value: ground if the context says so, else empty."""
    if isinstance(v, Var):
        if v.name in lam:
            return node("i-var", lam, {}, v, lam[v.name])
        return node("i-var", lam, {}, v, EMPTY)
    if isinstance(v, Bang):
        return node("i-bang", lam, {}, v, EMPTY)
    if isinstance(v, Pair):
        p1 = _default_value_derivation(v.fst, lam)
        p2 = _default_value_derivation(v.snd, lam)
        if not (is_ground(p1.type) and is_ground(p2.type)):
            raise InferenceError(f"erased pair {pretty(v)} has no ground typing")
        return node("i-pair", lam, {}, v, Tensor(p1.type, p2.type), (p1, p2))
    raise InferenceError(f"cannot type erased value {pretty(v)}")


def _anti_split(v: Term, occurrences: list[Derivation], lam: Mapping[str, IType]) -> Derivation:
    """Merge the typings of the copies of ``v`` into one typing of ``v``."""
    if not occurrences:
        return _default_value_derivation(v, lam)
    ground = [d for d in occurrences if is_ground(d.type)]
    if ground:
        if len(ground) != len(occurrences) or any(d.type != ground[0].type for d in ground):
            raise InferenceError(f"copies of {pretty(v)} have incompatible types")
        return ground[0]
    if isinstance(v, Var):
        items = tuple(i for d in occurrences for i in d.type.items)  # type: ignore[union-attr]
        return node("i-var", lam, {}, v, Multiset(items))
    if isinstance(v, Bang):
        prem = tuple(p for d in occurrences for p in d.premises)
        items = tuple(i for d in occurrences for i in d.type.items)  # type: ignore[union-attr]
        return node("i-bang", lam, {}, v, Multiset(items), prem)
    raise InferenceError(f"copies of {pretty(v)} cannot be merged")


def _anti_substitute(body: Term, x: str, v: Term, d: Derivation, lam: Mapping[str, IType]) -> tuple[Derivation, Derivation]:
    """From a derivation of ``body{x := v}`` get derivations of ``v`` and ``body``."""
    a = _AntiSubst(x, v)
    pbody = a.run(body, d)
    pv = _anti_split(v, a.occurrences, lam)
    return pv, pbody


def _peel_derivation(d: Derivation, n: int) -> tuple[list[Derivation], Derivation]:
    shells = []
    for _ in range(n):
        if d.rule not in ("i-let", "i-letp"):
            raise InferenceError("derivation does not follow the substitution frames")
        shells.append(d)
        d = d.premises[1]
    return shells, d


def _wrap_frames(frames: list, shells: list[Derivation], core: Derivation) -> Derivation:
    """Rebuild frame nodes (let/letp) around ``core``, typed like ``core``."""
    out = core
    for fr, shell in zip(reversed(frames), reversed(shells)):
        if isinstance(fr, LetFrame):
            subject: Term = Let(fr.var, fr.bound, out.subject)
        else:
            subject = LetP(fr.fst, fr.snd, fr.scrutinee, out.subject)
        out = Derivation(shell.rule, Judgment((), (), subject, out.type), (shell.premises[0], out))
    return out


def expand_redex(redex: Term, rule: str, d: Derivation) -> Derivation:
    """Given a derivation of the contractum, build one of ``redex`` (contexts are stale)."""
    lam = d.lam
    if rule == "der!":
        assert isinstance(redex, Der) and isinstance(redex.arg, Bang)
        bang = node("i-bang", lam, {}, redex.arg, Multiset((d.type,)), (d,))
        return node("i-der", lam, {}, redex, d.type, (bang,))
    if rule == "dpair":
        assert isinstance(redex, LetP) and isinstance(redex.scrutinee, Pair)
        v, w = redex.scrutinee.fst, redex.scrutinee.snd
        mid = substitute(redex.body, redex.fst, v, freshen_copies=True)
        pw, p_mid = _anti_substitute(mid, redex.snd, w, d, lam)
        pv, p_body = _anti_substitute(redex.body, redex.fst, v, p_mid, lam)
        if not (is_ground(pv.type) and is_ground(pw.type)):
            raise InferenceError("letp components must have ground types")
        ppair = node("i-pair", lam, {}, redex.scrutinee, Tensor(pv.type, pw.type), (pv, pw))
        return node("i-letp", lam, {}, redex, d.type, (ppair, p_body))
    if rule == "dsub":
        assert isinstance(redex, Let)
        frames, v = peel(redex.bound)
        shells, core = _peel_derivation(d, len(frames))
        pv, pbody = _anti_substitute(redex.body, redex.var, v, core, core.lam)
        bound = _wrap_frames(frames, shells, pv)
        return node("i-let", lam, {}, redex, pbody.type, (bound, pbody))
    if rule == "db":
        assert isinstance(redex, App)
        frames, lam_term = peel(redex.fun)
        assert isinstance(lam_term, Lam)
        shells, core = _peel_derivation(d, len(frames))
        pv, pbody = _anti_substitute(lam_term.body, lam_term.var, redex.arg, core, core.lam)
        abs_ = node("i-abs", {}, {}, lam_term, Arrow(pv.type, pbody.type), (pbody,))
        fun = _wrap_frames(frames, shells, abs_)
        return node("i-app", lam, {}, redex, pbody.type, (fun, pv))
    raise ValueError(f"unknown rule {rule}")


def _descend(d: Derivation, path: Sequence[int]) -> list[Derivation]:
    chain = [d]
    for i in path:
        d = d.premises[i]
        chain.append(d)
    return chain


def expand_step(before: Term, redex_path: Sequence[int], rule: str, d_after: Derivation,
                context: Mapping[str, IType]) -> Derivation:
    """Derivation of ``before`` from one of the term it reduces to in one step."""
    chain = _descend(d_after, redex_path)
    redex = before
    for i in redex_path:
        redex = list(children(redex))[i]
    new = expand_redex(redex, rule, chain[-1])
    for parent, i in zip(reversed(chain[:-1]), reversed(list(redex_path))):
        prem = list(parent.premises)
        prem[i] = new
        new = Derivation(parent.rule, parent.judgment, tuple(prem))
    new = _resubject(new, before)
    return recontext(new, context)


def _resubject(d: Derivation, t: Term) -> Derivation:
    """Set subjects along the spine so that ``d`` derives ``t``."""
    if d.subject == t:
        return d
    kids = list(children(t))
    if d.rule == "i-bang":
        prem = tuple(_resubject(p, kids[0]) for p in d.premises)
    elif len(kids) == len(d.premises):
        prem = tuple(_resubject(p, k) for p, k in zip(d.premises, kids))
    else:
        prem = d.premises
    return Derivation(d.rule, replace(d.judgment, subject=t), prem)


def expand_trace(trace: ReductionTrace, d_final: Derivation, context: Mapping[str, IType]) -> list[Derivation]:
    """Derivations of every term of the trace, first term first."""
    terms = trace.terms
    out = [d_final]
    d = d_final
    for k in range(len(trace.steps) - 1, -1, -1):
        r, _ = trace.steps[k]
        d = expand_step(terms[k], r.path, r.rule, d, context)
        out.append(d)
    out.reverse()
    return out


def infer_ground(t: Term, context: Optional[Mapping[str, IType]] = None,
                 fuel: Optional[int] = None, check_result: bool = True) -> Derivation:
    """The derivation of a (possibly higher-order) term in a ground context."""
    return infer_with_trace(t, context, fuel, check_result)[0]


def infer_with_trace(t: Term, context: Optional[Mapping[str, IType]] = None,
                     fuel: Optional[int] = None, check_result: bool = True,
                     ) -> tuple[Derivation, ReductionTrace, list[Derivation]]:
    """Like :func:`infer_ground`, also returning the trace and every intermediate derivation."""
    ctx0 = dict(context or {})
    nf, trace = normalize(t, fuel)
    d_nf = infer_low(nf, ctx0)
    # Observation statuses fixed by the normal form also apply to the context.
    ctx0 = {x: _restatus(a, d_nf) for x, a in ctx0.items()}
    if not is_ground(d_nf.type):
        raise InferenceError(f"normal form has non-ground type {d_nf.type}")
    derivs = expand_trace(trace, d_nf, ctx0)
    if check_result:
        failure = check_diagnostic(derivs[0])
        if failure is not None:
            raise InferenceError(f"reconstructed derivation is invalid: {failure}")
    return derivs[0], trace, derivs


def _restatus(a: IType, d: Derivation) -> IType:
    status = {x.name: x.observed for _, n in d.nodes() for x in atoms(n.type)}
    return map_atoms(a, lambda x: Atom(x.name, status.get(x.name, x.observed)))


def parse_type(text: str) -> IType:
    """Parse the textual type syntax used in output (``X * Y``, ``[A, B]``, ``P -o A``, ``X^t``)."""
    import re

    toks = re.findall(r"-o|\^[tf]|[A-Za-z_][A-Za-z0-9_']*|[\[\](),*]", text)
    pos = 0

    def peek() -> Optional[str]:
        return toks[pos] if pos < len(toks) else None

    def take(expected: Optional[str] = None) -> str:
        nonlocal pos
        tok = peek()
        if tok is None or (expected is not None and tok != expected):
            raise ValueError(f"bad type {text!r}")
        pos += 1
        return tok

    def arrow() -> IType:
        left = tensor()
        if peek() == "-o":
            take()
            return Arrow(left, arrow())
        return left

    def tensor() -> IType:
        left = atom()
        if peek() == "*":
            take()
            return Tensor(left, tensor())
        return left

    def atom() -> IType:
        tok = peek()
        if tok == "(":
            take()
            t = arrow()
            take(")")
            return t
        if tok == "[":
            take()
            items = []
            if peek() != "]":
                items.append(arrow())
                while peek() == ",":
                    take()
                    items.append(arrow())
            take("]")
            return Multiset(tuple(items))
        name = take()
        if peek() in ("^t", "^f"):
            return Atom(name, take() == "^t")
        return Atom(name)

    t = arrow()
    if pos != len(toks):
        raise ValueError(f"bad type {text!r}")
    return t
