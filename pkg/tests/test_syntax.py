from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from hobn.errors import ParseError
from hobn.generate import random_first_order, random_higher_order
from hobn.syntax import (
    alpha_equivalent, desugar, format_probability, is_core, is_low_level, load, numeral, parse,
    pretty, substitute, unique_binders, validate,
)
from hobn.terms import App, Case, Lam, Let, LetP, Numeral, Observe, Sample, Tuple, Var, free_vars

from conftest import GOLDEN, source


def test_parse_let_sample():
    t = parse("let x = sample bern(0.3) in x")
    assert t == Let("x", Sample(Fraction(3, 10)), Var("x"))


def test_parse_fraction_probability():
    assert parse("sample bern(3/10)") == Sample(Fraction(3, 10))


def test_case_clauses_are_sorted_and_complete():
    t = parse("case <a, b> of { <t,t> => sample bern(0.1); <f,f> => sample bern(0.2); "
                  "<t,f> => sample bern(0.3); <f,t> => sample bern(0.4) }")
    assert isinstance(t, Case)
    assert {k for k, _ in t.clauses} == {(False, False), (False, True), (True, False), (True, True)}
    u = parse("case <a, b> of { <f,t> => sample bern(0.4); <t,f> => sample bern(0.3); "
              "<f,f> => sample bern(0.2); <t,t> => sample bern(0.1) }")
    assert t == u


def test_missing_case_clause_is_an_error():
    with pytest.raises(ParseError):
        parse("case x of { t => sample bern(0.5) }")


def test_parse_error_has_location():
    with pytest.raises(ParseError) as e:
        parse("let x = sample bern(0.5) in\n  <x,")
    assert str(e.value).startswith("2:")


def test_probability_out_of_range():
    with pytest.raises(ParseError):
        parse("sample bern(1.5)")


def test_surface_forms():
    assert isinstance(parse("<a, b, c>"), Tuple)
    assert isinstance(parse("3"), Numeral)
    assert isinstance(parse("obs(x = t)"), Observe)
    assert isinstance(parse("letp <a, b> = p in a"), LetP)


def test_application_is_left_associative():
    t = parse("f_ x y")
    assert t == App(App(Var("f_"), Var("x")), Var("y"))


def test_format_probability():
    assert format_probability(Fraction(3, 10)) == "0.3"
    assert format_probability(Fraction(1, 3)) == "1/3"


@pytest.mark.parametrize("name", GOLDEN)
def test_corpus_round_trips(name):
    t = parse(source(name))
    assert parse(pretty(t)) == t


@pytest.mark.parametrize("name", GOLDEN)
def test_desugared_corpus_is_core_with_unique_binders(name):
    t = load(source(name))
    assert is_core(t)
    assert unique_binders(t)
    assert validate(t) == []
    assert not free_vars(t)


@settings(max_examples=100, deadline=None)
@given(st.randoms(use_true_random=False))
def test_generated_terms_round_trip(rng):
    t = random_higher_order(rng, 3) if rng.random() < 0.5 else random_first_order(rng, 6)
    assert parse(pretty(t), core=True) == t


def test_first_order_programs_are_low_level():
    import random

    rng = random.Random(3)
    for _ in range(20):
        assert is_low_level(random_first_order(rng))


def test_numerals_are_scott_encoded():
    zero, two = numeral(0), numeral(2)
    assert not free_vars(zero) and not free_vars(two)
    assert pretty(zero).startswith("!")


def test_desugar_tuple_binding_uses_pair_splits():
    t = desugar(parse("let <a, b, c> = <x, y, z> in a"))
    assert isinstance(t, LetP)


def test_if_becomes_application_of_the_condition():
    t = desugar(parse("if c then a else b"), use_prelude=False)
    assert isinstance(t, App)


def test_validate_flags_surface_forms():
    assert validate(parse("<a, b, c>"))


def test_alpha_equivalence():
    assert alpha_equivalent(parse("\\x. x"), parse("\\y. y"))
    assert not alpha_equivalent(parse("\\x. y"), parse("\\x. z"))


def test_substitution_avoids_capture():
    t = parse("\\y. x y")
    s = substitute(t, "x", Var("y"))
    assert isinstance(s, Lam) and s.var != "y"
    assert free_vars(s) == {"y"}
