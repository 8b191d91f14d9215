"""Factors over named Boolean random variables.

A factor is a dense ``numpy`` array with one axis per variable, axes sorted
by name.  An unobserved variable has the two-element domain ``(f, t)``
(index 0 is false); an observed variable has the singleton domain ``(b,)``,
so evidence physically shrinks the table.

Multiplications and additions are counted in an explicit :class:`Accounting`
object that callers pass in; nothing is global.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np

from hobn.errors import DomainMismatch, UnknownName, ZeroEvidence


@dataclass(frozen=True, order=True)
class VarDomain:
    name: str
    observed: Optional[bool] = None

    @property
    def values(self) -> tuple[bool, ...]:
        return (False, True) if self.observed is None else (self.observed,)

    def index(self, value: bool) -> int:
        if self.observed is None:
            return int(value)
        if value != self.observed:
            raise KeyError(f"{self.name} is observed {self.observed}, not {value}")
        return 0

    def __str__(self) -> str:
        if self.observed is None:
            return self.name
        return f"{self.name}^{'t' if self.observed else 'f'}"


@dataclass
class Accounting:
    """Running totals of arithmetic performed by factor operations."""

    multiplications: int = 0
    additions: int = 0
    max_width: int = 0
    log: list[tuple[str, int]] = field(default_factory=list)

    def charge_product(self, n: int, width: int) -> None:
        self.multiplications += n
        self.max_width = max(self.max_width, width)
        if n:
            self.log.append(("mul", n))

    def charge_sum(self, n: int) -> None:
        self.additions += n
        if n:
            self.log.append(("add", n))

    def merge(self, other: "Accounting") -> None:
        self.multiplications += other.multiplications
        self.additions += other.additions
        self.max_width = max(self.max_width, other.max_width)
        self.log.extend(other.log)


class Factor:
    """An immutable non-negative table over a sorted scope of named variables."""

    __slots__ = ("scope", "table")

    def __init__(self, scope: Iterable[VarDomain], table: np.ndarray | Sequence[float] | float) -> None:
        doms = tuple(sorted(scope, key=lambda d: d.name))
        names = [d.name for d in doms]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate names in scope {names}")
        shape = tuple(len(d.values) for d in doms)
        arr = np.array(table, dtype=np.float64).reshape(shape)
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise ValueError("factor entries must be finite and non-negative")
        arr.setflags(write=False)
        self.scope = doms
        self.table = arr

    # -- basic views ---------------------------------------------------------
    @property
    def names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.scope)

    @property
    def domains(self) -> dict[str, VarDomain]:
        return {d.name: d for d in self.scope}

    @property
    def unobserved(self) -> frozenset[str]:
        return frozenset(d.name for d in self.scope if d.observed is None)

    def __len__(self) -> int:
        return int(self.table.size)

    def value(self, assignment: Mapping[str, bool]) -> float:
        try:
            idx = tuple(d.index(assignment[d.name]) for d in self.scope)
        except KeyError:
            return 0.0
        return float(self.table[idx])

    def __getitem__(self, assignment: Mapping[str, bool]) -> float:
        return self.value(assignment)

    def items(self) -> Iterator[tuple[dict[str, bool], float]]:
        """Assignments in row-major order (false before true)."""
        for combo in itertools.product(*(d.values for d in self.scope)):
            yield dict(zip(self.names, combo)), float(self.table[tuple(d.index(b) for d, b in zip(self.scope, combo))])

    def total(self) -> float:
        return float(self.table.sum())

    def allclose(self, other: "Factor", atol: float = 1e-12) -> bool:
        return self.scope == other.scope and bool(np.allclose(self.table, other.table, rtol=0.0, atol=atol))

    def max_abs_diff(self, other: "Factor") -> float:
        if self.scope != other.scope:
            return float("inf")
        if self.table.size == 0:
            return 0.0
        return float(np.max(np.abs(self.table - other.table)))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Factor) and self.scope == other.scope and bool(np.array_equal(self.table, other.table))

    def __hash__(self) -> int:
        return hash((self.scope, self.table.tobytes()))

    def __repr__(self) -> str:
        inner = ", ".join(
            f"{''.join('t' if a[n] else 'f' for n in self.names) or '()'}: {v:.6g}" for a, v in self.items()
        )
        return f"Factor[{', '.join(map(str, self.scope))}]({inner})"

    # -- serialization -------------------------------------------------------
    def to_json(self) -> dict:
        return {
            "scope": [{"name": d.name, "observed": d.observed} for d in self.scope],
            "table": [float(x) for x in self.table.reshape(-1)],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "Factor":
        scope = [VarDomain(s["name"], s.get("observed")) for s in data["scope"]]
        return cls(scope, data["table"])

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    def to_ascii(self, digits: int = 6) -> str:
        """An aligned table: one row per assignment, value in the last column."""
        header = [str(d) for d in self.scope] + ["value"]
        rows = [
            ["t" if a[n] else "f" for n in self.names] + [f"{v:.{digits}g}"]
            for a, v in self.items()
        ]
        widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
        lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in [header] + rows]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines)


def _check_domains(factors: Sequence[Factor]) -> dict[str, VarDomain]:
    merged: dict[str, VarDomain] = {}
    for f in factors:
        for d in f.scope:
            seen = merged.get(d.name)
            if seen is None:
                merged[d.name] = d
            elif seen != d:
                raise DomainMismatch(f"name {d.name} occurs as {seen} and as {d}")
    return merged


def _expand(f: Factor, names: Sequence[str]) -> np.ndarray:
    """View ``f.table`` with size-1 axes inserted for the missing ``names``."""
    own = set(f.names)
    shape = [len(f.domains[n].values) if n in own else 1 for n in names]
    return f.table.reshape(shape)


def product_many(factors: Sequence[Factor], acct: Optional[Accounting] = None) -> Factor:
    """Product of several factors.

    Cost: with ``k`` operands of nonempty scope, ``(k - 1) * |result|``
    multiplications, where the result size is ``2^w`` for ``w`` unobserved
    names.  Operands with empty scope are scalar units and cost nothing.
    """
    factors = list(factors)
    doms = _check_domains(factors)
    scope = sorted(doms.values(), key=lambda d: d.name)
    names = [d.name for d in scope]
    shape = tuple(len(d.values) for d in scope)
    table = np.ones(shape, dtype=np.float64)
    for f in factors:
        table = table * _expand(f, names)
    result = Factor(scope, table)
    if acct is not None:
        k = sum(1 for f in factors if f.scope)
        acct.charge_product(max(k - 1, 0) * len(result), len(result.unobserved) if k else 0)
    return result


def product(f1: Factor, f2: Factor, acct: Optional[Accounting] = None) -> Factor:
    return product_many([f1, f2], acct)


def sum_out(f: Factor, names: Iterable[str], acct: Optional[Accounting] = None) -> Factor:
    z = set(names)
    if not z:
        return f
    missing = z - set(f.names)
    if missing:
        raise UnknownName(f"cannot sum out {sorted(missing)}: not in scope {list(f.names)}")
    axes = tuple(i for i, n in enumerate(f.names) if n in z)
    keep = [d for d in f.scope if d.name not in z]
    result = Factor(keep, f.table.sum(axis=axes))
    if acct is not None:
        acct.charge_sum(len(f) - len(result))
    return result


def unit(domains: Iterable[VarDomain] = ()) -> Factor:
    doms = list(domains)
    return Factor(doms, np.ones(tuple(len(d.values) for d in sorted(doms, key=lambda d: d.name))))


ONE = unit()


def scalar(value: float) -> Factor:
    return Factor((), value)


def completion(f: Factor, domains: Iterable[VarDomain]) -> Factor:
    """Extend ``f`` to the union of its scope and ``domains`` (unit on the new names)."""
    return product(f, unit(domains))


def normalize_posterior(f: Factor) -> tuple[Factor, float]:
    mass = f.total()
    if mass <= 0.0:
        raise ZeroEvidence("the observations have probability zero")
    return Factor(f.scope, f.table / mass), mass


def bernoulli_factor(dom: VarDomain, p: float) -> Factor:
    return Factor([dom], [p if b else 1.0 - p for b in dom.values])


def cpt_factor(child: VarDomain, parents: Sequence[VarDomain], params: Mapping[tuple[bool, ...], float]) -> Factor:
    """Factor of a conditional table; parents may repeat (their values then agree).

    ``params`` maps a tuple of parent values (aligned with ``parents``,
    repetitions included) to the probability that the child is true.
    """
    doms = {child.name: child}
    for p in parents:
        if p.name in doms and doms[p.name] != p:
            raise DomainMismatch(f"name {p.name} has inconsistent observation status")
        doms[p.name] = p
    scope = sorted(doms.values(), key=lambda d: d.name)
    table = np.zeros(tuple(len(d.values) for d in scope))
    for combo in itertools.product(*(d.values for d in scope)):
        a = dict(zip((d.name for d in scope), combo))
        q = float(params[tuple(a[p.name] for p in parents)])
        table[tuple(d.index(b) for d, b in zip(scope, combo))] = q if a[child.name] else 1.0 - q
    return Factor(scope, table)
