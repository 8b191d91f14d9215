from __future__ import annotations

import random

from hobn.generate import (
    first_order_programs, higher_order_programs, name_clash_derivation, random_first_order,
)
from hobn.rewrite import is_bn_normal_form, normalize
from hobn.syntax import is_low_level
from hobn.terms import count_probabilistic, free_vars


def test_first_order_programs_are_seeded():
    assert list(first_order_programs(5, 10)) == list(first_order_programs(5, 10))
    assert list(first_order_programs(5, 10)) != list(first_order_programs(6, 10))


def test_first_order_programs_respect_the_name_bound():
    for t in first_order_programs(0, 200):
        assert 1 <= count_probabilistic(t) <= 6
        assert not free_vars(t)
        assert is_low_level(t)


def test_higher_order_programs_need_reduction():
    reducible = 0
    for t in higher_order_programs(0, 50):
        nf, trace = normalize(t)
        assert is_bn_normal_form(nf)
        reducible += len(trace) > 0
    assert reducible >= 40


def test_observations_occur():
    rng = random.Random(1)
    from hobn.terms import Observe, subterms

    seen = sum(any(isinstance(s, Observe) for s in subterms(random_first_order(rng))) for _ in range(50))
    assert seen > 0


def test_name_clash_fixture_is_deterministic():
    assert name_clash_derivation() == name_clash_derivation()
