"""Command-line front end: ``hobn parse|reduce|type|infer|cost|graph|check``.

Results go to standard output and diagnostics to standard error.  Exit
statuses: 0 success, 1 failed check or I/O error, 2 syntax error, 3 type
error, 4 fuel exhausted, 5 zero evidence.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, TextIO

from hobn.errors import HobnError, InferenceError
from hobn.factors import Factor
from hobn.rewrite import default_fuel, normalize
from hobn.suite import EXIT_FAILURE, EXIT_OK, EXIT_TYPE, check_suite, exit_code
from hobn.syntax import load, parse, pretty
from hobn.types import Derivation, check_diagnostic, generalize, infer_ground, measure

COMMANDS = ("parse", "reduce", "type", "infer", "cost", "graph", "check")


@dataclass
class RunConfig:
    command: str
    path: Optional[str] = None
    fuel: Optional[int] = None
    output: str = "text"
    flags: set[str] = field(default_factory=set)
    dot: Optional[str] = None
    seed: int = 0
    fuzz: int = 0
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if self.fuel is not None and self.fuel <= 0:
            raise ValueError("fuel must be positive")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hobn", description="Exact inference for higher-order probabilistic programs.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("file")
        sp.add_argument("--fuel", type=int, default=None, help="reduction step budget (default: $HOBN_FUEL or 100000)")
        return sp

    sp = add("parse", "parse a program and print it back")
    sp.add_argument("--core", action="store_true", help="print the desugared core term")

    sp = add("reduce", "normalize a program")
    sp.add_argument("--trace", action="store_true", help="print every reduction step")

    sp = add("type", "infer the derivation of a program, or check a derivation (.json)")
    sp.add_argument("--general", action="store_true", help="drop observation marks not forced by an observation")
    sp.add_argument("--show-derivation", action="store_true")
    sp.add_argument("--json", action="store_true")

    sp = add("infer", "compute the factor of a program")
    sp.add_argument("--posterior", action="store_true", help="normalize by the evidence")
    sp.add_argument("--cost", action="store_true", help="report the cost of the inductive interpretation")
    sp.add_argument("--json", action="store_true")

    sp = add("cost", "print the derivation annotated with costs")
    sp.add_argument("--json", action="store_true")

    sp = add("graph", "extract the Bayesian network or the flow graph")
    kind = sp.add_mutually_exclusive_group()
    kind.add_argument("--flow", action="store_true")
    kind.add_argument("--bn", action="store_true")
    sp.add_argument("--dot", metavar="OUT", help="write Graphviz DOT to OUT ('-' for standard output)")

    sp = sub.add_parser("check", help="run the property checks over a corpus directory")
    sp.add_argument("file", nargs="?", default="corpus")
    sp.add_argument("--seed", type=int, default=0, help="seed for the random programs")
    sp.add_argument("--fuzz", type=int, default=0, help="number of random programs of each kind")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--json", action="store_true")
    return p


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    flags = {name for name in ("core", "trace", "general", "show_derivation", "posterior", "cost", "flow", "bn")
             if getattr(ns, name, False)}
    return RunConfig(
        command=ns.command,
        path=ns.file,
        fuel=getattr(ns, "fuel", None),
        output="json" if getattr(ns, "json", False) else ("dot" if getattr(ns, "dot", None) else "text"),
        flags=flags,
        dot=getattr(ns, "dot", None),
        seed=getattr(ns, "seed", 0),
        fuzz=getattr(ns, "fuzz", 0),
        jobs=getattr(ns, "jobs", 1),
    )


# ---------------------------------------------------------------------------
# Commands


def _factor_lines(f: Factor) -> list[str]:
    names = ", ".join(str(d) for d in f.scope)
    lines = [f"factor over {{{names}}}"]
    for a, v in f.items():
        key = " ".join(f"{x}={'t' if b else 'f'}" for x, b in a.items()) or "()"
        lines.append(f"  {key}: {v:.12g}")
    return lines


def _derivation(cfg: RunConfig, source: str) -> Derivation:
    if cfg.path and cfg.path.endswith(".json"):
        data = json.loads(source)
        d = Derivation.from_json(data.get("derivation", data))
        failure = check_diagnostic(d)
        if failure is not None:
            raise InferenceError(f"invalid derivation: {failure}")
        return d
    return infer_ground(load(source), fuel=cfg.fuel)


def _cmd_parse(cfg: RunConfig, source: str, out: TextIO) -> int:
    t = load(source) if "core" in cfg.flags else parse(source)
    print(pretty(t), file=out)
    return EXIT_OK


def _cmd_reduce(cfg: RunConfig, source: str, out: TextIO) -> int:
    t = load(source)
    nf, trace = normalize(t, cfg.fuel)
    if "trace" in cfg.flags:
        print(f"0. {pretty(trace.initial)}", file=out)
        for k, (r, u) in enumerate(trace.steps, 1):
            print(f"{k}. [{r}] {pretty(u)}", file=out)
        print(f"steps: {len(trace)}", file=out)
    print(pretty(nf), file=out)
    return EXIT_OK


def _cmd_type(cfg: RunConfig, source: str, out: TextIO) -> int:
    d = _derivation(cfg, source)
    if "general" in cfg.flags:
        d = generalize(d)
    if cfg.output == "json":
        print(d.dumps(), file=out)
        return EXIT_OK
    if "show_derivation" in cfg.flags:
        print(d.to_text(), file=out)
    print(f"type: {d.type}", file=out)
    print(f"measure: {measure(d)}", file=out)
    return EXIT_OK


def _cmd_infer(cfg: RunConfig, source: str, out: TextIO) -> int:
    from hobn.factors import normalize_posterior
    from hobn.semantics import cost_of, interpret_inductive

    d = _derivation(cfg, source)
    dec = interpret_inductive(d)
    marginal = dec.root
    posterior, evidence = normalize_posterior(marginal)
    report = cost_of(dec)
    if cfg.output == "json":
        data: dict = {"type": str(d.type), "factor": marginal.to_json(), "evidence": evidence}
        if "posterior" in cfg.flags:
            data["posterior"] = posterior.to_json()
        if "cost" in cfg.flags:
            data["cost"] = report.to_json()
        print(json.dumps(data, indent=2), file=out)
        return EXIT_OK
    print(f"type: {d.type}", file=out)
    print("\n".join(_factor_lines(marginal)), file=out)
    if "posterior" in cfg.flags:
        print(f"evidence: {evidence:.12g}", file=out)
        print("posterior:", file=out)
        print("\n".join(_factor_lines(posterior)[1:]), file=out)
    if "cost" in cfg.flags:
        print(report, file=out)
    return EXIT_OK


def _cmd_cost(cfg: RunConfig, source: str, out: TextIO) -> int:
    from hobn.semantics import cost_of, interpret_inductive

    d = _derivation(cfg, source)
    dec = interpret_inductive(d)
    report = cost_of(dec)
    if cfg.output == "json":
        print(json.dumps(report.to_json(), indent=2), file=out)
        return EXIT_OK
    print(dec.to_text(), file=out)
    print(report, file=out)
    return EXIT_OK


def _cmd_graph(cfg: RunConfig, source: str, out: TextIO) -> int:
    from hobn.flowgraph import build_flow, export_dot, extract_bn, is_acyclic

    d = _derivation(cfg, source)
    if "flow" in cfg.flags:
        g = build_flow(d)
        text = export_dot(g)
        summary = json.dumps({"positions": len(g.vertices), "edges": len(g.edges), "acyclic": is_acyclic(g)}, indent=2)
    else:
        bn = extract_bn(d)
        if bn.conditional:
            print("warning: open term; the network is conditional on its free variables", file=sys.stderr)
        text = export_dot(bn)
        summary = json.dumps(bn.to_json(), indent=2)
    if cfg.dot == "-":
        print(text, file=out)
    elif cfg.dot:
        Path(cfg.dot).write_text(text + "\n")
        print(summary, file=out)
    else:
        print(summary, file=out)
    return EXIT_OK


def _cmd_check(cfg: RunConfig, out: TextIO) -> int:
    directory = Path(cfg.path or "corpus")
    if not directory.is_dir():
        print(f"hobn: {directory} is not a directory", file=sys.stderr)
        return EXIT_FAILURE
    report = check_suite(directory, fuzz=cfg.fuzz, seed=cfg.seed, jobs=cfg.jobs)
    if cfg.output == "json":
        print(json.dumps(report.to_json(), indent=2), file=out)
    else:
        print(report.to_text(), file=out)
    return EXIT_OK if report.ok else EXIT_FAILURE


_HANDLERS = {
    "parse": _cmd_parse,
    "reduce": _cmd_reduce,
    "type": _cmd_type,
    "infer": _cmd_infer,
    "cost": _cmd_cost,
    "graph": _cmd_graph,
}


def run(cfg: RunConfig, out: Optional[TextIO] = None, err: Optional[TextIO] = None) -> int:
    """Execute one command and return its exit status."""
    out = out if out is not None else sys.stdout
    err = err if err is not None else sys.stderr
    if cfg.fuel is None and cfg.command != "check":
        cfg.fuel = default_fuel()
    if cfg.command == "check":
        return _cmd_check(cfg, out)
    try:
        source = Path(cfg.path or "").read_text()
    except OSError as e:
        print(f"hobn: {e}", file=err)
        return EXIT_FAILURE
    try:
        return _HANDLERS[cfg.command](cfg, source, out)
    except HobnError as e:
        code = exit_code(e)
        print(f"hobn: {type(e).__name__}: {e}", file=err)
        return code
    except (ValueError, KeyError) as e:
        if cfg.path and cfg.path.endswith(".json"):
            print(f"hobn: malformed derivation: {e}", file=err)
            return EXIT_TYPE
        raise


def main(argv: Optional[Sequence[str]] = None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(ns)
    except ValueError as e:
        print(f"hobn: {e}", file=sys.stderr)
        return EXIT_FAILURE
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
