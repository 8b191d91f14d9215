"""Flow graphs of derivations and extraction of Bayesian networks.

A position is one occurrence of an atom in one judgment of a derivation.
Edges follow the data flow of each random variable: from its probabilistic
axiom, through the typing rules, to every place where it is consumed.
Conditional tables add dependency edges from the parents' positions to the
child's main position; collapsing positions by name yields the DAG of the
Bayesian network.

Orientation follows polarity.  A context entry carries input polarity and
the subject type output polarity, with the left of an arrow flipped.  Edges
between a premise and its conclusion point upwards (conclusion to premise)
at inputs and downwards at outputs.  Axiom edges run from input to output,
cut edges (a value flowing into a binder or argument) from output to input.

Only context entries whose variable is free in the judgment's subject get
positions; entries added by weakening carry no flow.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

from hobn.errors import WellFormednessViolation
from hobn.factors import Factor, product_many, sum_out
from hobn.terms import free_vars
from hobn.types import (
    PROBABILISTIC, Arrow, Atom, Derivation, IType, Multiset, Tensor,
    probabilistic_axioms, type_eq, atoms,
)

Step = Union[str, tuple[str, int]]
TypePath = tuple[Step, ...]
Slot = tuple[str, ...]


@dataclass(frozen=True, order=True)
class Position:
    node: int
    slot: Slot
    path: TypePath
    name: str
    observed: Optional[bool]
    polarity: str  # "up" (input) or "down" (output)
    _hash: int = field(default=0, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_hash", hash((self.node, self.slot, self.path, self.name)))

    def __hash__(self) -> int:
        return self._hash

    @property
    def key(self) -> tuple[int, Slot, TypePath]:
        return (self.node, self.slot, self.path)

    def label(self) -> str:
        slot = "type" if self.slot == ("type",) else f"ctx:{self.slot[1]}"
        steps = ".".join(s if isinstance(s, str) else f"{s[0]}{s[1]}" for s in self.path)
        arrow = "^" if self.polarity == "up" else "v"
        return f"{self.node}/{slot}/{steps or '-'}/{self.name}{arrow}"


@dataclass(frozen=True)
class Edge:
    src: Position
    dst: Position
    kind: str  # "flow" (same name) or "dep" (parent to child in a conditional table)


@dataclass
class FlowGraph:
    vertices: list[Position]
    edges: list[Edge]
    roots: dict[str, Position] = field(default_factory=dict)

    def successors(self) -> dict[Position, list[Position]]:
        out: dict[Position, list[Position]] = defaultdict(list)
        for e in self.edges:
            out[e.src].append(e.dst)
        return out

    def same_name_edges(self) -> list[Edge]:
        return [e for e in self.edges if e.kind == "flow"]


# ---------------------------------------------------------------------------
# Atom paths inside types


def atom_paths(t: IType, prefix: TypePath = ()) -> list[tuple[TypePath, Atom, bool]]:
    """Every atom occurrence with its path and whether polarity is flipped."""
    out: list[tuple[TypePath, Atom, bool]] = []

    def go(s: IType, path: TypePath, flip: bool) -> None:
        if isinstance(s, Atom):
            out.append((path, s, flip))
        elif isinstance(s, Tensor):
            go(s.left, path + ("L",), flip)
            go(s.right, path + ("R",), flip)
        elif isinstance(s, Multiset):
            for i, a in enumerate(s.items):
                go(a, path + (("m", i),), flip)
        elif isinstance(s, Arrow):
            go(s.arg, path + ("arg",), not flip)
            go(s.res, path + ("res",), flip)

    go(t, prefix, False)
    return out


def align(a: IType, b: IType) -> list[tuple[TypePath, TypePath]]:
    """Pair the atom paths of two equal types (multisets up to order)."""
    pairs: list[tuple[TypePath, TypePath]] = []

    def go(x: IType, y: IType, px: TypePath, py: TypePath) -> None:
        if isinstance(x, Atom):
            pairs.append((px, py))
        elif isinstance(x, Tensor):
            assert isinstance(y, Tensor)
            go(x.left, y.left, px + ("L",), py + ("L",))
            go(x.right, y.right, px + ("R",), py + ("R",))
        elif isinstance(x, Arrow):
            assert isinstance(y, Arrow)
            go(x.arg, y.arg, px + ("arg",), py + ("arg",))
            go(x.res, y.res, px + ("res",), py + ("res",))
        else:
            assert isinstance(x, Multiset) and isinstance(y, Multiset)
            for i, j in _match_items(list(x.items), list(y.items)):
                go(x.items[i], y.items[j], px + (("m", i),), py + (("m", j),))

    if not type_eq(a, b):
        raise ValueError(f"cannot align {a} with {b}")
    go(a, b, (), ())
    return pairs


def _match_items(xs: Sequence[IType], ys: Sequence[IType], offset: int = 0) -> list[tuple[int, int]]:
    """Match each item of ``xs`` to an equal item of ``ys``, positionally when possible."""
    used: set[int] = set()
    out = []
    for i, x in enumerate(xs):
        j = offset + i
        if not (j < len(ys) and j not in used and type_eq(x, ys[j])):
            j = next((k for k in range(len(ys)) if k not in used and type_eq(x, ys[k])), -1)
            if j < 0:
                raise ValueError(f"no match for multiset item {x}")
        used.add(j)
        out.append((i, j))
    return out


# ---------------------------------------------------------------------------
# Construction


def _relevant(n: Derivation) -> set[str]:
    return set(free_vars(n.subject))


def build_flow(d: Derivation) -> FlowGraph:
    """The flow graph of ``d`` (positions numbered by preorder node index)."""
    nodes = list(d.nodes())
    index = {path: i for i, (path, _) in enumerate(nodes)}
    positions: dict[tuple[int, Slot, TypePath], Position] = {}
    roots: dict[str, Position] = {}

    for i, (_, n) in enumerate(nodes):
        rel = _relevant(n)
        j = n.judgment
        for x, t in j.lam + j.gam:
            if x not in rel:
                continue
            for path, a, flip in atom_paths(t):
                pol = "down" if flip else "up"
                positions[(i, ("ctx", x), path)] = Position(i, ("ctx", x), path, a.name, a.observed, pol)
        for path, a, flip in atom_paths(j.type):
            pol = "up" if flip else "down"
            positions[(i, ("type",), path)] = Position(i, ("type",), path, a.name, a.observed, pol)
        if n.rule in PROBABILISTIC:
            roots[n.type.name] = positions[(i, ("type",), ())]  # type: ignore[union-attr]

    edges: list[Edge] = []
    seen: set[tuple] = set()

    def add(src: Position, dst: Position, kind: str = "flow") -> None:
        key = (src.key, dst.key)
        if key not in seen:
            seen.add(key)
            edges.append(Edge(src, dst, kind))

    def pos(i: int, slot: Slot, path: TypePath) -> Optional[Position]:
        return positions.get((i, slot, path))

    def vertical(ci: int, cslot: Slot, cpre: TypePath, ctype: IType,
                 pi: int, pslot: Slot, ppre: TypePath, ptype: IType) -> None:
        for a, b in align(ctype, ptype):
            c, p = pos(ci, cslot, cpre + a), pos(pi, pslot, ppre + b)
            if c is None or p is None:
                continue
            if c.polarity == "down":
                add(p, c)
            else:
                add(c, p)

    def dual(i1: int, s1: Slot, pre1: TypePath, t1: IType,
             i2: int, s2: Slot, pre2: TypePath, t2: IType, cut: bool) -> None:
        for a, b in align(t1, t2):
            p, q = pos(i1, s1, pre1 + a), pos(i2, s2, pre2 + b)
            if p is None or q is None:
                continue
            up, down = (p, q) if p.polarity == "up" else (q, p)
            if cut:
                add(down, up)
            else:
                add(up, down)

    TYPE: Slot = ("type",)

    for path, n in nodes:
        i = index[path]
        prem = [index[path + (k,)] for k in range(len(n.premises))]
        rule = n.rule
        lam, gam = n.lam, n.gam
        s = n.subject

        # Axioms.
        if rule in ("i-var", "i-obs"):
            x = s.name if rule == "i-var" else s.target.name  # type: ignore[union-attr]
            t = lam.get(x, gam.get(x))
            if t is not None:
                dual(i, ("ctx", x), (), t, i, TYPE, (), n.type, cut=False)
        elif rule == "i-cond":
            from hobn.terms import flatten_pairs

            target = positions[(i, TYPE, ())]
            for leaf in flatten_pairs(s.scrutinee):  # type: ignore[union-attr]
                src = positions.get((i, ("ctx", leaf.name), ()))  # type: ignore[union-attr]
                if src is not None:
                    add(src, target, "dep")

        # Context edges from the conclusion to the premises.
        for k, pk in enumerate(n.premises):
            pj = prem[k]
            prel = _relevant(pk)
            for x, t in pk.lam.items():
                if x in lam and x in prel and type_eq(lam[x], t):
                    vertical(i, ("ctx", x), (), lam[x], pj, ("ctx", x), (), t)
        binder_names = _bound_here(n)
        for x, t in gam.items():
            assert isinstance(t, Multiset)
            offset = 0
            for k, pk in enumerate(n.premises):
                if x in binder_names.get(k, ()):
                    continue
                pt = pk.gam.get(x)
                if not isinstance(pt, Multiset):
                    continue
                for a, b in _match_items(list(pt.items), list(t.items), offset):
                    vertical(i, ("ctx", x), (("m", b),), t.items[b], prem[k], ("ctx", x), (("m", a),), pt.items[a])
                offset += len(pt.items)

        # Rule-specific edges.
        ps = n.premises
        if rule == "i-pair":
            vertical(i, TYPE, ("L",), n.type.left, prem[0], TYPE, (), ps[0].type)  # type: ignore[union-attr]
            vertical(i, TYPE, ("R",), n.type.right, prem[1], TYPE, (), ps[1].type)  # type: ignore[union-attr]
        elif rule == "i-letp":
            tv = ps[0].type
            assert isinstance(tv, Tensor)
            dual(prem[0], TYPE, ("L",), tv.left, prem[1], ("ctx", s.fst), (), ps[1].lam[s.fst], cut=True)  # type: ignore[union-attr]
            dual(prem[0], TYPE, ("R",), tv.right, prem[1], ("ctx", s.snd), (), ps[1].lam[s.snd], cut=True)  # type: ignore[union-attr]
            vertical(i, TYPE, (), n.type, prem[1], TYPE, (), ps[1].type)
        elif rule == "i-let":
            x = s.var  # type: ignore[union-attr]
            bound_t = ps[0].type
            tx = ps[1].lam.get(x, ps[1].gam.get(x))
            if tx is not None:
                dual(prem[0], TYPE, (), bound_t, prem[1], ("ctx", x), (), tx, cut=True)
            vertical(i, TYPE, (), n.type, prem[1], TYPE, (), ps[1].type)
        elif rule == "i-abs":
            x = s.var  # type: ignore[union-attr]
            arrow = n.type
            assert isinstance(arrow, Arrow)
            tx = ps[0].lam.get(x, ps[0].gam.get(x))
            if tx is not None:
                vertical(i, TYPE, ("arg",), arrow.arg, prem[0], ("ctx", x), (), tx)
            vertical(i, TYPE, ("res",), arrow.res, prem[0], TYPE, (), ps[0].type)
        elif rule == "i-app":
            fun_t = ps[0].type
            assert isinstance(fun_t, Arrow)
            dual(prem[0], TYPE, ("arg",), fun_t.arg, prem[1], TYPE, (), ps[1].type, cut=True)
            vertical(i, TYPE, (), n.type, prem[0], TYPE, ("res",), fun_t.res)
        elif rule == "i-bang":
            m = n.type
            assert isinstance(m, Multiset)
            for k, (item, pk) in enumerate(zip(m.items, ps)):
                vertical(i, TYPE, (("m", k),), item, prem[k], TYPE, (), pk.type)
        elif rule == "i-der":
            pm = ps[0].type
            assert isinstance(pm, Multiset)
            vertical(i, TYPE, (), n.type, prem[0], TYPE, (("m", 0),), pm.items[0])

    vertices = sorted(positions.values(), key=lambda p: (p.node, p.slot, _path_key(p.path)))
    return FlowGraph(vertices, edges, roots)


def _path_key(path: TypePath) -> tuple:
    return tuple((s, 0) if isinstance(s, str) else s for s in path)


def _bound_here(n: Derivation) -> dict[int, tuple[str, ...]]:
    """Variables bound by the rule, per premise index."""
    s = n.subject
    if n.rule == "i-let":
        return {1: (s.var,)}  # type: ignore[union-attr]
    if n.rule == "i-letp":
        return {1: (s.fst, s.snd)}  # type: ignore[union-attr]
    if n.rule == "i-abs":
        return {0: (s.var,)}  # type: ignore[union-attr]
    return {}


# ---------------------------------------------------------------------------
# Graph checks


def is_acyclic(g: FlowGraph) -> bool:
    indeg: dict[Position, int] = {v: 0 for v in g.vertices}
    succ = g.successors()
    for e in g.edges:
        indeg.setdefault(e.src, 0)
        indeg[e.dst] = indeg.get(e.dst, 0) + 1
    queue = [v for v, k in indeg.items() if k == 0]
    seen = 0
    while queue:
        v = queue.pop()
        seen += 1
        for w in succ.get(v, []):
            indeg[w] -= 1
            if indeg[w] == 0:
                queue.append(w)
    return seen == len(indeg)


def max_same_name_parents(g: FlowGraph) -> int:
    parents: dict[Position, int] = defaultdict(int)
    for e in g.same_name_edges():
        parents[e.dst] += 1
    return max(parents.values(), default=0)


@dataclass(frozen=True)
class Component:
    name: str
    positions: frozenset[Position]
    root: Optional[Position]


def named_components(g: FlowGraph) -> dict[str, Component]:
    """Group positions by name; each main name must form a single tree.

    Raises :class:`WellFormednessViolation` if a main name's positions split
    into several connected components, if a position has two parents of the
    same name, or if the root is not the position introduced by the axiom.
    """
    by_name: dict[str, list[Position]] = defaultdict(list)
    for v in g.vertices:
        by_name[v.name].append(v)
    parent: dict[Position, Position] = {v: v for v in g.vertices}

    def find(v: Position) -> Position:
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    indeg: dict[Position, int] = defaultdict(int)
    for e in g.same_name_edges():
        if e.src.name != e.dst.name:
            raise WellFormednessViolation(f"flow edge joins {e.src.name} and {e.dst.name}")
        indeg[e.dst] += 1
        if indeg[e.dst] > 1:
            raise WellFormednessViolation(f"position {e.dst.label()} has two parents")
        a, b = find(e.src), find(e.dst)
        if a != b:
            parent[a] = b

    out: dict[str, Component] = {}
    for name, ps in sorted(by_name.items()):
        comps = {find(p) for p in ps}
        sources = [p for p in ps if indeg[p] == 0]
        root = g.roots.get(name)
        if root is not None:
            if len(comps) != 1:
                raise WellFormednessViolation(f"positions of {name} form {len(comps)} components")
            if sources != [root]:
                raise WellFormednessViolation(f"component of {name} is not rooted at its axiom")
        out[name] = Component(name, frozenset(ps), root if root is not None else (sources[0] if len(sources) == 1 else None))
    return out


# ---------------------------------------------------------------------------
# Bayesian networks


@dataclass(frozen=True)
class BNNode:
    name: str
    observed: Optional[bool]
    parents: tuple[str, ...]
    cpt: Factor


@dataclass
class BayesianNetwork:
    nodes: dict[str, BNNode]
    edges: set[tuple[str, str]]
    query: tuple[str, ...]
    conditional: bool = False

    def parents(self, name: str) -> tuple[str, ...]:
        return self.nodes[name].parents

    def is_dag(self) -> bool:
        succ: dict[str, list[str]] = defaultdict(list)
        indeg = {n: 0 for n in self.nodes}
        for a, b in self.edges:
            succ[a].append(b)
            indeg[b] = indeg.get(b, 0) + 1
            indeg.setdefault(a, 0)
        queue = [n for n, k in indeg.items() if k == 0]
        seen = 0
        while queue:
            n = queue.pop()
            seen += 1
            for m in succ[n]:
                indeg[m] -= 1
                if indeg[m] == 0:
                    queue.append(m)
        return seen == len(indeg)

    def to_json(self) -> dict:
        return {
            "nodes": [
                {
                    "name": n.name,
                    "observed": n.observed,
                    "parents": list(n.parents),
                    "cpt": n.cpt.to_json(),
                }
                for n in sorted(self.nodes.values(), key=lambda n: _name_key(n.name))
            ],
            "query": list(self.query),
            "conditional": self.conditional,
        }


def _name_key(name: str) -> tuple:
    import re

    return tuple(int(p) if p.isdigit() else p for p in re.split(r"(\d+)", name))


def extract_bn(d: Derivation, debug_collapse: bool = False) -> BayesianNetwork:
    """Bayesian network of a ground derivation: one node per probabilistic axiom."""
    from hobn.semantics import axiom_factor

    nodes: dict[str, BNNode] = {}
    edges: set[tuple[str, str]] = set()
    for info in probabilistic_axioms(d):
        parents = tuple(dict.fromkeys(a.name for a in info.parents))
        n = d.at(info.path)
        nodes[info.main.name] = BNNode(info.main.name, info.main.observed, parents, axiom_factor(n))
        edges.update((p, info.main.name) for p in parents)
    query = tuple(a.name for a in atoms(d.type))
    bn = BayesianNetwork(nodes, edges, query, conditional=bool(d.judgment.lam or d.judgment.gam))
    if debug_collapse:
        collapsed = collapse(build_flow(d))
        if collapsed != edges:
            raise WellFormednessViolation(f"collapsed flow {sorted(collapsed)} differs from {sorted(edges)}")
    return bn


def collapse(g: FlowGraph) -> set[tuple[str, str]]:
    """Name-collapse of a flow graph with self-loops dropped."""
    return {(e.src.name, e.dst.name) for e in g.edges if e.src.name != e.dst.name}


def bn_semantics(b: BayesianNetwork) -> Factor:
    """Joint factor of a network: the product of its tables."""
    return product_many([n.cpt for n in b.nodes.values()])


def bn_marginal(b: BayesianNetwork, keep: Iterable[str]) -> Factor:
    joint = bn_semantics(b)
    keep = set(keep)
    return sum_out(joint, [x for x in joint.names if x not in keep])


# ---------------------------------------------------------------------------
# DOT export


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(x: Union[FlowGraph, BayesianNetwork], name: str = "G") -> str:
    """Graphviz source with nodes and edges in a stable order."""
    if not (x.nodes if isinstance(x, BayesianNetwork) else x.vertices):
        return f"digraph {name} {{}}"
    if isinstance(x, BayesianNetwork):
        lines = [f"digraph {name} {{"]
        for n in sorted(x.nodes.values(), key=lambda n: _name_key(n.name)):
            status = "" if n.observed is None else f"={'t' if n.observed else 'f'} (observed)"
            style = ", style=filled, fillcolor=lightgray" if n.observed is not None else ""
            lines.append(f"  {_quote(n.name)} [label={_quote(n.name + status)}{style}];")
        for a, b in sorted(x.edges, key=lambda e: (_name_key(e[0]), _name_key(e[1]))):
            lines.append(f"  {_quote(a)} -> {_quote(b)};")
        lines.append("}")
        return "\n".join(lines)
    lines = [f"digraph {name} {{"]
    for v in x.vertices:
        lines.append(f"  {_quote(v.label())} [label={_quote(v.name)}];")
    for e in sorted(x.edges, key=lambda e: (e.src.label(), e.dst.label())):
        style = " [style=dashed]" if e.kind == "dep" else ""
        lines.append(f"  {_quote(e.src.label())} -> {_quote(e.dst.label())}{style};")
    lines.append("}")
    return "\n".join(lines)
