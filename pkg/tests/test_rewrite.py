from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from hobn.errors import FuelExhausted
from hobn.generate import random_higher_order
from hobn.rewrite import (
    default_fuel, explore, find_redexes, first_redex, is_bn_normal_form, is_normal, normalize,
    reduction_graph, step,
)
from hobn.syntax import alpha_canonical, alpha_equivalent, load, parse
from hobn.terms import count_probabilistic, free_vars

from conftest import source, term


def test_der_bang():
    nf, trace = normalize(parse("der !(sample bern(0.5))", core=True))
    assert nf == parse("sample bern(0.5)")
    assert [r.rule for r, _ in trace.steps] == ["der!"]


def test_beta_at_a_distance():
    t = load("(let z = sample bern(0.5) in \\x. <x, z>) y")
    nf, trace = normalize(t)
    assert trace.steps[0][0].rule == "db"
    assert alpha_equivalent(nf, load("let z = sample bern(0.5) in <y, z>"))


def test_substitution_at_a_distance():
    t = parse("let x = (let z = sample bern(0.5) in <z, z>) in x", core=True)
    nf, trace = normalize(t)
    assert trace.steps[0][0].rule == "dsub"
    assert alpha_equivalent(nf, parse("let z = sample bern(0.5) in <z, z>"))


def test_pair_split():
    nf, _ = normalize(parse("letp <a, b> = <x, y> in <b, a>", core=True))
    assert nf == parse("<y, x>")


def test_normal_form_of_the_sprinkler_is_itself():
    t = term("sprinkler")
    nf, trace = normalize(t)
    assert len(trace) == 0
    assert is_bn_normal_form(nf)


def test_two_coins_unfold_in_three_steps():
    nf, trace = normalize(term("two_coins"))
    assert len(trace) == 3
    assert count_probabilistic(nf) == 3
    assert is_bn_normal_form(nf)


@pytest.mark.parametrize("n, steps", [(1, 39), (2, 63), (3, 87)])
def test_hmm_normalizes_to_bn_normal_form(n, steps):
    nf, trace = normalize(term(f"hmm{n}"))
    assert len(trace) == steps
    assert is_bn_normal_form(nf)
    assert count_probabilistic(nf) == 2 * n + 1


def test_fuel_exhaustion():
    t = load(source("loop"))
    with pytest.raises(FuelExhausted) as e:
        normalize(t, fuel=10)
    assert e.value.fuel == 10


def test_fuel_from_environment(monkeypatch):
    monkeypatch.setenv("HOBN_FUEL", "7")
    assert default_fuel() == 7
    with pytest.raises(FuelExhausted):
        normalize(load(source("loop")))


def test_normal_form_has_no_redex():
    assert reduction_graph(parse("<x, y>")) == {0}
    assert is_normal(parse("<x, y>"))


def test_leftmost_outermost_is_first():
    t = load("let a = der !(sample bern(0.5)) in let b = der !(sample bern(0.5)) in <a, b>")
    rs = find_redexes(t)
    assert len(rs) == 2
    assert first_redex(t) == rs[0]


def test_step_rejects_wrong_rule():
    t = load("der !(sample bern(0.5))")
    r = first_redex(t)
    with pytest.raises(ValueError):
        step(t, type(r)(r.path, "db"))


def test_two_coins_is_confluent():
    assert reduction_graph(term("two_coins")) == {3}


@settings(max_examples=60, deadline=None)
@given(st.randoms(use_true_random=False))
def test_confluence_on_random_terms(rng):
    t = random_higher_order(rng, 3)
    g = explore(t)
    nf, trace = normalize(t)
    assert len(g.lengths) == 1
    assert g.lengths == {len(trace)}
    assert g.normal_forms == {alpha_canonical(nf)}


@settings(max_examples=60, deadline=None)
@given(st.randoms(use_true_random=False))
def test_reduction_keeps_binders_unique_and_closed(rng):
    from hobn.syntax import unique_binders

    t = random_higher_order(rng, 3)
    _, trace = normalize(t)
    for u in trace.terms:
        assert unique_binders(u)
        assert not free_vars(u)
