"""Acceptance criteria, one test each, with a PASS/FAIL line per criterion.

Run ``pytest tests/test_acceptance.py -v`` (the lines appear in the terminal
summary) or ``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import time
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator

import pytest

from hobn.cli import main
from hobn.factors import sum_out
from hobn.flowgraph import bn_semantics, extract_bn
from hobn.generate import first_order_programs, higher_order_programs, name_clash_derivation
from hobn.oracle import enumerate_worlds, oracle_global, table_distance, worlds_by_names
from hobn.rewrite import explore, is_bn_normal_form, normalize
from hobn.semantics import compatibility_failures, cost, interpret_global, interpret_inductive, posterior_query
from hobn.suite import structural
from hobn.syntax import alpha_canonical, load
from hobn.terms import count_probabilistic
from hobn.types import atoms, check, infer_ground, infer_low, infer_with_trace, measure

CORPUS = Path(__file__).resolve().parent.parent / "corpus"
SEED = 2024
GOLDEN = [
    "sprinkler", "sprinkler_posterior", "evidence", "two_coins", "coin_learning",
    "chain_t1", "chain_t2", "hmm1", "hmm2", "hmm3",
]

RESULTS: dict[int, str] = {}


@contextmanager
def criterion(n: int, title: str) -> Iterator[list[str]]:
    details: list[str] = []
    try:
        yield details
    except BaseException:
        RESULTS[n] = f"criterion {n:2d}: FAIL  {title}  [{'; '.join(details)}]"
        print(RESULTS[n])
        raise
    RESULTS[n] = f"criterion {n:2d}: PASS  {title}  [{'; '.join(details)}]"
    print(RESULTS[n])


def program(name: str):
    return load((CORPUS / f"{name}.hobn").read_text())


_FIRST_ORDER: list = []


def first_order_500() -> list:
    if not _FIRST_ORDER:
        _FIRST_ORDER.extend(first_order_programs(SEED, 500))
    return _FIRST_ORDER


def test_criterion_01_sprinkler():
    with criterion(1, "sprinkler joint, evidence and posterior") as info:
        start = time.perf_counter()
        joint = posterior_query(program("sprinkler"))
        post = posterior_query(program("sprinkler_posterior"))
        elapsed = time.perf_counter() - start
        rw = joint.marginal[{"X2": True, "X4": True}]
        oracle = table_distance(oracle_global(joint.derivation), joint.marginal)
        p = post.posterior[{"X2": True, "X4": True}]
        info += [f"P(R=t,W=t)={rw:.5f}", f"evidence={post.evidence:.5f}", f"posterior={p:.5f}",
                 f"oracle diff={oracle:.1e}", f"{elapsed:.3f}s"]
        assert abs(rw - 0.33) <= 5e-3
        assert oracle <= 1e-12
        assert abs(post.evidence - 0.69) <= 5e-3
        assert abs(p - 0.48) <= 5e-3
        assert elapsed < 1.0


def test_criterion_02_evidence():
    with criterion(2, "evidence program") as info:
        q = posterior_query(program("evidence"))
        tt = q.marginal[{"X1": True, "X2": True}]
        ft = q.marginal[{"X1": False, "X2": True}]
        pt = q.posterior[{"X1": True, "X2": True}]
        pf = q.posterior[{"X1": False, "X2": True}]
        info += [f"unnormalized={tt:.12g}/{ft:.12g}", f"evidence={q.evidence:.12g}", f"posterior={pt:.4f}/{pf:.4f}"]
        assert abs(tt - 0.14) <= 1e-12 and abs(ft - 0.008) <= 1e-12
        assert abs(q.evidence - 0.148) <= 1e-12
        assert abs(pt - 0.946) <= 1e-3 and abs(pf - 0.054) <= 1e-3


def test_criterion_03_coin_learning():
    with criterion(3, "coin learning") as info:
        q = posterior_query(program("coin_learning"))
        heads = {n: True for n in q.marginal.names}
        tails = dict(heads, X1=False)
        jt, jf = q.marginal[heads], q.marginal[tails]
        pt, pf = q.posterior[heads], q.posterior[tails]
        info += [f"joint={jt:.12g}/{jf:.12g}", f"evidence={q.evidence:.12g}", f"posterior={pt:.4f}/{pf:.4f}"]
        assert abs(jt - 0.245) <= 1e-12 and abs(jf - 0.08) <= 1e-12
        assert abs(q.evidence - 0.325) <= 1e-12
        assert abs(pt - 0.753) <= 1e-3 and abs(pf - 0.246) <= 1e-3


def test_criterion_04_cost():
    with criterion(4, "cost of the two chain programs") as info:
        d1, d2 = infer_ground(program("chain_t1")), infer_ground(program("chain_t2"))
        c1, c2 = cost(d1).multiplications, cost(d2).multiplications
        diff = interpret_global(d1).max_abs_diff(interpret_global(d2))
        info += [f"t1={c1}", f"t2={c2}", f"marginal diff={diff:.1e}"]
        assert (c1, c2) == (12, 8)
        assert diff <= 1e-12


def test_criterion_05_oracle_equivalence():
    with criterion(5, "500 random first-order programs against the oracles") as info:
        start = time.perf_counter()
        worst = 0.0
        for t in first_order_500():
            assert count_probabilistic(t) <= 6
            d = infer_low(t)
            g = interpret_global(d)
            worst = max(worst, g.max_abs_diff(interpret_inductive(d).root))
            worst = max(worst, table_distance(oracle_global(d), g))
            worlds = worlds_by_names(enumerate_worlds(t), [a.name for a in atoms(d.type)])
            worst = max(worst, table_distance(worlds, g))
        elapsed = time.perf_counter() - start
        info += [f"max diff={worst:.1e}", f"{elapsed:.2f}s"]
        assert worst <= 1e-12
        assert elapsed < 30.0


def test_criterion_06_bn_extraction():
    with criterion(6, "network extraction preserves the semantics") as info:
        derivations = [infer_low(t) for t in first_order_500()]
        derivations += [infer_ground(program(n)) for n in ("two_coins", "hmm1", "hmm2", "hmm3")]
        worst = 0.0
        for d in derivations:
            g = interpret_global(d)
            joint = bn_semantics(extract_bn(d))
            marginal = sum_out(joint, [x for x in joint.names if x not in g.names])
            worst = max(worst, marginal.max_abs_diff(g))
        info += [f"{len(derivations)} derivations", f"max diff={worst:.1e}"]
        assert worst <= 1e-12


def test_criterion_07_confluence():
    with criterion(7, "confluence on 200 random typable terms") as info:
        steps = 0
        for t in higher_order_programs(SEED, 200):
            infer_ground(t)
            graph = explore(t)
            nf, trace = normalize(t)
            steps += len(trace)
            assert graph.lengths == {len(trace)}
            assert graph.normal_forms == {alpha_canonical(nf)}
        info += ["200 terms", f"{steps} leftmost-outermost steps"]


def test_criterion_08_invariance():
    with criterion(8, "semantics invariant along golden traces") as info:
        worst, count = 0.0, 0
        for name in GOLDEN:
            _, _, derivs = infer_with_trace(program(name))
            final = interpret_global(derivs[-1])
            for d in derivs:
                worst = max(worst, interpret_global(d).max_abs_diff(final))
                count += 1
        info += [f"{count} derivations", f"max diff={worst:.1e}"]
        assert worst <= 1e-12


def test_criterion_09_structure():
    with criterion(9, "acyclicity, named components, compatibility, measure") as info:
        count = 0
        for name in GOLDEN:
            _, _, derivs = infer_with_trace(program(name))
            ms = [measure(d) for d in derivs]
            assert all(a > b for a, b in zip(ms, ms[1:])), name
            for d in derivs:
                assert structural(d), name
                count += 1
        for t in first_order_500():
            assert structural(infer_low(t))
            count += 1
        for t in higher_order_programs(SEED, 200):
            _, _, derivs = infer_with_trace(t)
            ms = [measure(d) for d in derivs]
            assert all(a > b for a, b in zip(ms, ms[1:]))
            for d in (derivs[0], derivs[-1]):
                assert structural(d)
                count += 1
        info.append(f"{count} derivations")


def test_criterion_10_hmm_template():
    with criterion(10, "recursive HMM template unrolled three times") as info:
        t = program("hmm3")
        nf, _ = normalize(t)
        d = infer_ground(t)
        bn = extract_bn(d)
        primitives = count_probabilistic(nf)
        names = d.names()
        conclusion = [a.name for a in atoms(d.type)]
        info += [f"primitives={primitives}", f"derivation names={len(names)}",
                 f"conclusion type {d.type} ({len(conclusion)} names)"]
        assert is_bn_normal_form(nf)
        assert primitives == 7
        assert len(names) == 7
        # Shape: S0 -> S1 -> S2 -> S3, with one observation child per step.
        children: dict[str, list[str]] = {}
        parents: dict[str, list[str]] = {}
        for a, b in bn.edges:
            children.setdefault(a, []).append(b)
            parents.setdefault(b, []).append(a)
        roots = [n for n in bn.nodes if n not in parents]
        assert len(roots) == 1
        state, chain, observations = roots[0], [roots[0]], []
        for _ in range(3):
            kids = children.get(state, [])
            nxt = [k for k in kids if k in children] or [k for k in kids if k == conclusion[-1]]
            assert len(nxt) == 1
            obs = [k for k in kids if k != nxt[0]]
            if state != roots[0]:
                assert len(obs) == 1
                observations.append(obs[0])
            state = nxt[0]
            chain.append(state)
        observations += children.get(state, [])
        assert len(chain) == 4 and len(observations) == 3
        assert all(o not in children for o in observations)
        assert conclusion == observations + [chain[-1]]


def test_criterion_11_negative_fixtures(capsys):
    with criterion(11, "name clash rejected, impossible observation exits 5") as info:
        d = name_clash_derivation()
        rejected = not check(d) and bool(compatibility_failures(d))
        code = main(["infer", str(CORPUS / "zero_evidence.hobn")])
        capsys.readouterr()
        info += [f"name clash rejected={rejected}", f"exit code={code}"]
        assert rejected
        assert code == 5


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
