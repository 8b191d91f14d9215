"""Property checks over a corpus of programs and over seeded random programs.

Every ``.hobn`` program is checked for agreement with the brute-force
oracles, confluence, structural well-formedness of its derivation and
invariance of the semantics along its reduction.  A program whose first
lines contain ``# expect: exit N`` (and optionally ``# fuel: K``) must
instead fail with that exit status.  A ``.deriv.json`` file holds
``{"expect": "reject" | "accept", "derivation": ...}`` and checks that the
derivation checker agrees.
"""

from __future__ import annotations

import json
import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from hobn.errors import (
    CompatibilityViolation, FuelExhausted, HobnError, InferenceError, ParseError,
    WellFormednessViolation, ZeroEvidence,
)
from hobn.factors import normalize_posterior, sum_out
from hobn.flowgraph import bn_semantics, build_flow, extract_bn, is_acyclic, named_components
from hobn.oracle import enumerate_worlds, oracle_global, table_distance, worlds_by_names
from hobn.rewrite import explore
from hobn.semantics import compatibility_failures, interpret_global, interpret_inductive
from hobn.syntax import alpha_canonical, load
from hobn.terms import Term, free_vars
from hobn.types import Derivation, atoms, check, check_diagnostic, infer_with_trace, measure

TOLERANCE = 1e-12
EXPLORE_BUDGET = 20_000

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_SYNTAX = 2
EXIT_TYPE = 3
EXIT_FUEL = 4
EXIT_ZERO_EVIDENCE = 5


def exit_code(e: BaseException) -> int:
    if isinstance(e, ParseError):
        return EXIT_SYNTAX
    if isinstance(e, (InferenceError, CompatibilityViolation, WellFormednessViolation)):
        return EXIT_TYPE
    if isinstance(e, FuelExhausted):
        return EXIT_FUEL
    if isinstance(e, ZeroEvidence):
        return EXIT_ZERO_EVIDENCE
    return EXIT_FAILURE


@dataclass
class FileResult:
    path: str
    checks: dict[str, bool] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def to_json(self) -> dict:
        return {"path": self.path, "ok": self.ok, "checks": self.checks, "notes": self.notes}


@dataclass
class SuiteReport:
    results: list[FileResult]

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.results)

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "files": len(self.results),
            "failures": [r.path for r in self.results if not r.ok],
            "results": [r.to_json() for r in self.results],
        }

    def to_text(self) -> str:
        lines = []
        for r in self.results:
            status = "ok  " if r.ok else "FAIL"
            checks = ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in r.checks.items())
            lines.append(f"{status} {r.path}: {checks}")
            lines.extend(f"       {n}" for n in r.notes)
        lines.append(f"{len(self.results)} checked, {sum(not r.ok for r in self.results)} failed")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# Individual properties


def oracle_agreement(d: Derivation, nf: Optional[Term] = None) -> bool:
    """Global, inductive and brute-force semantics coincide."""
    g = interpret_global(d)
    i = interpret_inductive(d).root
    if not g.allclose(i, TOLERANCE):
        return False
    if table_distance(oracle_global(d), g) > TOLERANCE:
        return False
    if nf is not None and not free_vars(nf):
        leaves = [a.name for a in atoms(d.type)]
        try:
            worlds = worlds_by_names(enumerate_worlds(nf), leaves)
        except ValueError:
            return False
        if table_distance(worlds, g) > TOLERANCE:
            return False
    return True


def confluence(t: Term, nf: Term, budget: int = EXPLORE_BUDGET) -> bool:
    g = explore(t, budget)
    return len(g.lengths) == 1 and g.normal_forms == frozenset({alpha_canonical(nf)})


def structural(d: Derivation, flow: bool = True) -> bool:
    if not check(d) or compatibility_failures(d):
        return False
    if not flow:
        return True
    g = build_flow(d)
    if not is_acyclic(g):
        return False
    try:
        named_components(g)
    except WellFormednessViolation:
        return False
    return True


def bn_agreement(d: Derivation) -> bool:
    g = interpret_global(d)
    joint = bn_semantics(extract_bn(d))
    marginal = sum_out(joint, [x for x in joint.names if x not in g.names])
    return marginal.allclose(g, TOLERANCE)


def invariance(derivs: list[Derivation]) -> bool:
    final = interpret_global(derivs[-1])
    return all(interpret_global(d).allclose(final, TOLERANCE) for d in derivs)


def measure_decreases(derivs: list[Derivation]) -> bool:
    ms = [measure(d) for d in derivs]
    return all(a > b for a, b in zip(ms, ms[1:]))


def check_term(t: Term, label: str, confluence_budget: int = EXPLORE_BUDGET) -> FileResult:
    r = FileResult(label)
    d, trace, derivs = infer_with_trace(t)
    nf = trace.final
    r.checks["oracle"] = oracle_agreement(d, nf)
    try:
        r.checks["confluence"] = confluence(t, nf, confluence_budget)
    except FuelExhausted:
        r.checks["confluence"] = False
        r.notes.append("confluence exploration exceeded its budget")
    # Rule checks on every step; flow graphs on both ends of the trace.
    r.checks["acyclicity"] = (all(structural(x, flow=False) for x in derivs[1:-1])
                              and structural(derivs[0]) and structural(derivs[-1]))
    r.checks["bn"] = bn_agreement(d)
    r.checks["invariance"] = invariance(derivs) and measure_decreases(derivs)
    return r


# ---------------------------------------------------------------------------
# Files


_EXPECT_RE = re.compile(r"^#\s*expect:\s*exit\s+(\d+)", re.MULTILINE)
_FUEL_RE = re.compile(r"^#\s*fuel:\s*(\d+)", re.MULTILINE)


def run_pipeline(source: str, fuel: Optional[int] = None) -> None:
    """Parse, type and interpret a program, raising the first error met."""
    t = load(source)
    d = infer_with_trace(t, fuel=fuel)[0]
    normalize_posterior(interpret_inductive(d).root)


def check_file(path: Path) -> FileResult:
    label = path.name
    try:
        text = path.read_text()
    except OSError as e:
        r = FileResult(label, {"read": False})
        r.notes.append(str(e))
        return r
    if path.name.endswith(".deriv.json"):
        return _check_derivation_file(label, text)
    expect = _EXPECT_RE.search(text)
    if expect is not None:
        fuel = _FUEL_RE.search(text)
        code = EXIT_OK
        try:
            run_pipeline(text, int(fuel.group(1)) if fuel else None)
        except HobnError as e:
            code = exit_code(e)
        r = FileResult(label, {"expected-exit": code == int(expect.group(1))})
        r.notes.append(f"intended failure: exit {code}")
        return r
    try:
        return check_term(load(text), label)
    except HobnError as e:
        r = FileResult(label, {"pipeline": False})
        r.notes.append(f"{type(e).__name__}: {e}")
        return r


def _check_derivation_file(label: str, text: str) -> FileResult:
    try:
        data = json.loads(text)
        d = Derivation.from_json(data["derivation"])
    except (ValueError, KeyError, HobnError) as e:
        r = FileResult(label, {"read": False})
        r.notes.append(str(e))
        return r
    expect_reject = data.get("expect", "accept") == "reject"
    failure = check_diagnostic(d)
    r = FileResult(label, {"check": (failure is not None) == expect_reject})
    if expect_reject and failure is not None:
        r.notes.append(f"intended rejection: {failure}")
    elif failure is not None:
        r.notes.append(f"rejected: {failure}")
    return r


def corpus_files(directory: Path) -> list[Path]:
    files = [p for p in directory.iterdir() if p.is_file() and (p.suffix == ".hobn" or p.name.endswith(".deriv.json"))]
    return sorted(files)


def check_suite(directory: Path | str, fuzz: int = 0, seed: int = 0, jobs: int = 1) -> SuiteReport:
    """Check every corpus file, then ``fuzz`` seeded random programs of each kind."""
    directory = Path(directory)
    files = corpus_files(directory)
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(check_file, files))
    else:
        results = [check_file(p) for p in files]
    results.extend(fuzz_results(fuzz, seed))
    return SuiteReport(results)


def fuzz_results(count: int, seed: int) -> list[FileResult]:
    from hobn.generate import random_first_order, random_higher_order

    out: list[FileResult] = []
    rng = random.Random(seed)
    makers: list[tuple[str, Callable[[random.Random], Term]]] = [
        ("first-order", lambda g: random_first_order(g, 6)),
        ("higher-order", lambda g: random_higher_order(g, 3)),
    ]
    for kind, make in makers:
        for k in range(count):
            t = make(rng)
            label = f"<{kind} #{k} seed {seed}>"
            try:
                out.append(check_term(t, label))
            except HobnError as e:
                r = FileResult(label, {"pipeline": False})
                r.notes.append(f"{type(e).__name__}: {e}")
                out.append(r)
    return out
