from __future__ import annotations

import json

import pytest
from hypothesis import given, settings, strategies as st

from hobn.errors import InferenceError
from hobn.generate import name_clash_derivation, random_first_order, random_higher_order
from hobn.syntax import load, parse
from hobn.types import (
    Arrow, Atom, Derivation, Multiset, Tensor, check, check_diagnostic, generalize,
    infer_ground, infer_low, infer_with_trace, is_first_order, is_ground, measure, parse_type,
    probabilistic_axioms, type_eq, type_from_json, type_to_json,
)

from conftest import GOLDEN, derivation, traced


def test_sample_axiom():
    d = infer_low(parse("sample bern(0.5)"))
    assert d.rule == "i-sample"
    assert d.type == Atom("X1")


def test_sprinkler_type_and_axioms():
    d = derivation("sprinkler")
    assert str(d.type) == "X2 * X4"
    assert len(probabilistic_axioms(d)) == 4
    assert check(d)
    assert is_first_order(d)


def test_observation_marks_the_name():
    d = derivation("evidence")
    assert str(d.type) == "X1 * X2^t"


def test_two_coins_uses_a_multiset():
    d = derivation("two_coins")
    assert str(d.type) == "X2 * X3"
    assert any(isinstance(t, Multiset) for _, n in d.nodes() for _, t in n.judgment.gam)
    assert not is_first_order(d)


@pytest.mark.parametrize("n, names", [(1, 3), (2, 5), (3, 7)])
def test_hmm_types(n, names):
    d = derivation(f"hmm{n}")
    assert check(d)
    assert len(probabilistic_axioms(d)) == names
    assert is_ground(d.type)


def test_self_application_of_a_coin_is_rejected():
    with pytest.raises(InferenceError):
        infer_ground(load("let x = sample bern(0.5) in x x"))


def test_higher_order_result_is_rejected():
    with pytest.raises(InferenceError):
        infer_ground(load("\\x. x"))


def test_name_clash_is_rejected():
    d = name_clash_derivation()
    failure = check_diagnostic(d)
    assert failure is not None
    assert "twice" in failure.message


def test_tampered_type_is_rejected():
    d = derivation("evidence")
    data = d.to_json()
    data["judgment"]["type"] = type_to_json(Atom("X1"))
    assert not check(Derivation.from_json(data))


def test_derivation_json_round_trip():
    d = derivation("coin_learning")
    again = Derivation.from_json(json.loads(d.dumps()))
    assert again == d


def test_text_form_has_one_rule_per_line():
    d = derivation("evidence")
    lines = d.to_text().splitlines()
    assert len(lines) == d.size()
    assert lines[0].startswith("i-let")


def test_type_syntax_round_trip():
    t = Tensor(Atom("X"), Arrow(Multiset((Atom("Y", True), Atom("Z"))), Atom("W")))
    assert parse_type(str(t)) == t
    assert type_from_json(type_to_json(t)) == t


def test_multiset_equality_ignores_order():
    assert type_eq(Multiset((Atom("A"), Atom("B"))), Multiset((Atom("B"), Atom("A"))))


def test_generalize_keeps_forced_observations():
    d = generalize(derivation("evidence"))
    assert str(d.type) == "X1 * X2^t"
    assert check(d)


@pytest.mark.parametrize("name", GOLDEN)
def test_measure_decreases_along_the_trace(name):
    _, trace, derivs = traced(name)
    assert len(derivs) == len(trace) + 1
    ms = [measure(d) for d in derivs]
    assert all(a > b for a, b in zip(ms, ms[1:]))


@pytest.mark.parametrize("name", GOLDEN)
def test_every_reconstructed_derivation_checks(name):
    _, trace, derivs = traced(name)
    for d, t in zip(derivs, trace.terms):
        assert check(d)
        assert d.subject == t


@settings(max_examples=60, deadline=None)
@given(st.randoms(use_true_random=False))
def test_subject_expansion_on_random_terms(rng):
    t = random_higher_order(rng, 3)
    d, trace, derivs = infer_with_trace(t)
    assert check(d)
    assert d.subject == t
    assert measure(derivs[0]) > measure(derivs[-1]) or len(trace) == 0


@settings(max_examples=100, deadline=None)
@given(st.randoms(use_true_random=False))
def test_first_order_names_are_distinct(rng):
    d = infer_low(random_first_order(rng))
    mains = [info.main.name for info in probabilistic_axioms(d)]
    assert len(mains) == len(set(mains))
    assert check(d)
