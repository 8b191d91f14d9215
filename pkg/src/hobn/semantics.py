"""Factor semantics of derivations and the cost of computing it.

Two interpretations are provided.  The global one multiplies the factors of
all probabilistic axioms and sums out every name that does not occur in the
conclusion.  The inductive one decorates each node bottom-up and sums names
out as soon as they stop being visible, which is what makes inference
efficient; the two agree on well-formed derivations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from hobn.errors import CompatibilityViolation
from hobn.factors import (
    ONE, Accounting, Factor, VarDomain, bernoulli_factor, cpt_factor,
    normalize_posterior, product_many, sum_out,
)
from hobn.terms import Term
from hobn.types import (
    PROBABILISTIC, Atom, Derivation, axiom_info, infer_ground,
)

Path = tuple[int, ...]


def domain(a: Atom) -> VarDomain:
    return VarDomain(a.name, a.observed)


def axiom_factor(d: Derivation) -> Factor:
    """Factor of an axiom; the non-probabilistic axioms give the unit 1."""
    if d.rule not in PROBABILISTIC:
        return ONE
    info = axiom_info(d)
    if not info.parents:
        return bernoulli_factor(domain(info.main), float(info.table[0][1]))
    params = {k: float(p) for k, p in info.table}
    return cpt_factor(domain(info.main), [domain(a) for a in info.parents], params)


def conclusion_names(d: Derivation) -> set[str]:
    return d.judgment.names()


def interpret_global(d: Derivation, acct: Optional[Accounting] = None) -> Factor:
    """Product of all axiom factors, marginalized onto the conclusion's names."""
    phis = [axiom_factor(n) for _, n in d.nodes() if n.rule in PROBABILISTIC]
    joint = product_many(phis, acct)
    keep = conclusion_names(d)
    return sum_out(joint, [x for x in joint.names if x not in keep], acct)


# ---------------------------------------------------------------------------
# Well-formedness


def subtree_names(d: Derivation) -> dict[Path, set[str]]:
    """Nm of every sub-derivation, computed bottom-up."""
    out: dict[Path, set[str]] = {}

    def go(n: Derivation, path: Path) -> set[str]:
        names = set(n.judgment.names())
        for i, p in enumerate(n.premises):
            names |= go(p, path + (i,))
        out[path] = names
        return names

    go(d, ())
    return out


def check_compatibility(premises: Sequence[Derivation],
                        names: Optional[Sequence[set[str]]] = None) -> bool:
    """No name internal to one premise may occur anywhere in a sibling."""
    if names is None:
        names = [subtree_names(p)[()] for p in premises]
    for j, pj in enumerate(premises):
        internal = names[j] - pj.judgment.names()
        for k in range(len(premises)):
            if k != j and internal & names[k]:
                return False
    return True


def compatibility_failures(d: Derivation) -> list[Path]:
    """Paths of the nodes whose premises are not compatible."""
    nm = subtree_names(d)
    bad = []
    for path, n in d.nodes():
        if len(n.premises) > 1:
            sub = [nm[path + (i,)] for i in range(len(n.premises))]
            if not check_compatibility(n.premises, sub):
                bad.append(path)
    return bad


def is_well_formed(d: Derivation) -> bool:
    return not compatibility_failures(d)


# ---------------------------------------------------------------------------
# Inductive interpretation and cost


@dataclass
class DecoratedDerivation:
    derivation: Derivation
    factors: dict[Path, Factor]
    local_cost: dict[Path, int]
    cost: dict[Path, int]
    accounting: Accounting

    @property
    def root(self) -> Factor:
        return self.factors[()]

    def to_text(self, show_factor: bool = False) -> str:
        notes = {}
        for path, f in self.factors.items():
            scope = "{" + ", ".join(map(str, f.scope)) + "}"
            notes[path] = f"cost {self.cost[path]}; names {scope}"
        return self.derivation.to_text(notes)


SUMMING_RULES = ("i-let", "i-app")


def interpret_inductive(d: Derivation, acct: Optional[Accounting] = None,
                        check_well_formed: bool = True) -> DecoratedDerivation:
    """Decorate every node with its factor, bottom-up."""
    acct = acct if acct is not None else Accounting()
    factors: dict[Path, Factor] = {}
    local: dict[Path, int] = {}
    total: dict[Path, int] = {}
    names = subtree_names(d) if check_well_formed else None

    def go(n: Derivation, path: Path) -> Factor:
        if n.rule in PROBABILISTIC or not n.premises:
            f = axiom_factor(n)
            factors[path], local[path], total[path] = f, 0, 0
            return f
        subs = [go(p, path + (i,)) for i, p in enumerate(n.premises)]
        if names is not None and len(n.premises) > 1:
            if not check_compatibility(n.premises, [names[path + (i,)] for i in range(len(n.premises))]):
                raise CompatibilityViolation(f"premises of the {n.rule} node at {path} are not compatible")
        before = acct.multiplications
        if n.rule in ("i-letp",):
            f = subs[1]
        elif n.rule in ("i-abs", "i-der"):
            f = subs[0]
        else:
            f = product_many(subs, acct)
            if n.rule in SUMMING_RULES:
                keep = n.judgment.names()
                f = sum_out(f, [x for x in f.names if x not in keep], acct)
        acct.max_width = max(acct.max_width, len(f.unobserved))
        factors[path] = f
        local[path] = acct.multiplications - before
        total[path] = local[path] + sum(total[path + (i,)] for i in range(len(n.premises)))
        return f

    go(d, ())
    return DecoratedDerivation(d, factors, local, total, acct)


@dataclass(frozen=True)
class CostReport:
    multiplications: int
    additions: int
    m: int
    n: int
    W: int

    @property
    def bound_inductive(self) -> int:
        return self.m * 2**self.W

    @property
    def bound_global(self) -> int:
        return self.m * 2**self.n

    def to_json(self) -> dict:
        return {
            "multiplications": self.multiplications,
            "additions": self.additions,
            "m": self.m,
            "n": self.n,
            "W": self.W,
            "bound_inductive": self.bound_inductive,
            "bound_global": self.bound_global,
        }

    def __str__(self) -> str:
        return "\n".join(f"{k}: {v}" for k, v in self.to_json().items())


def cost(d: Derivation) -> CostReport:
    dec = interpret_inductive(d)
    return cost_of(dec)


def cost_of(dec: DecoratedDerivation) -> CostReport:
    d = dec.derivation
    axioms = d.axioms()
    names: set[str] = set()
    for _, n in d.nodes():
        if n.rule in PROBABILISTIC:
            f = axiom_factor(n)
            names |= set(f.names)
    return CostReport(
        multiplications=dec.accounting.multiplications,
        additions=dec.accounting.additions,
        m=len(axioms),
        n=len(names),
        W=dec.accounting.max_width,
    )


def static_cost(d: Derivation) -> int:
    """Multiplication count read off the first-order cost annotation.

    Only names are tracked, no factor is computed: a binary rule whose
    premises both carry names costs ``2^k`` with ``k`` the number of
    unobserved names in their union.
    """

    def go(n: Derivation) -> tuple[int, dict[str, Optional[bool]]]:
        if n.rule in PROBABILISTIC:
            f = axiom_factor(n)
            return 0, {dd.name: dd.observed for dd in f.scope}
        if not n.premises:
            return 0, {}
        results = [go(p) for p in n.premises]
        c = sum(r[0] for r in results)
        if n.rule == "i-letp":
            return c, results[1][1]
        if n.rule in ("i-abs", "i-der"):
            return c, results[0][1]
        union: dict[str, Optional[bool]] = {}
        for _, ys in results:
            union.update(ys)
        nonempty = sum(1 for _, ys in results if ys)
        if nonempty > 1:
            c += (nonempty - 1) * 2 ** sum(1 for v in union.values() if v is None)
        if n.rule in SUMMING_RULES:
            keep = n.judgment.names()
            union = {x: v for x, v in union.items() if x in keep}
        return c, union

    return go(d)[0]


# ---------------------------------------------------------------------------
# End-to-end queries


@dataclass
class QueryResult:
    derivation: Derivation
    marginal: Factor
    posterior: Factor
    evidence: float
    bn: object
    cost: CostReport
    observed: frozenset[str] = field(default_factory=frozenset)


def posterior_query(t: Term, context: Optional[Mapping[str, Atom]] = None,
                    fuel: Optional[int] = None) -> QueryResult:
    """Type the term, interpret it inductively and normalize by the evidence."""
    from hobn.flowgraph import extract_bn

    d = infer_ground(t, context, fuel)
    dec = interpret_inductive(d)
    marginal = dec.root
    posterior, evidence = normalize_posterior(marginal)
    bn = extract_bn(d)
    observed = frozenset(x.name for x in marginal.scope if x.observed is not None)
    return QueryResult(d, marginal, posterior, evidence, bn, cost_of(dec), observed)
