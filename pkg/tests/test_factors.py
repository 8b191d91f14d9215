from __future__ import annotations

import json
import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hobn.errors import DomainMismatch, UnknownName, ZeroEvidence
from hobn.factors import (
    ONE, Accounting, Factor, VarDomain, bernoulli_factor, cpt_factor, normalize_posterior,
    product, product_many, scalar, sum_out, unit,
)

NAMES = ["A", "B", "C", "D"]


@st.composite
def factors(draw, names=st.sets(st.sampled_from(NAMES), max_size=3)):
    scope = sorted(draw(names))
    doms = [VarDomain(n) for n in scope]
    size = 2 ** len(doms)
    table = draw(st.lists(st.floats(0, 1, allow_nan=False), min_size=size, max_size=size))
    return Factor(doms, np.array(table).reshape((2,) * len(doms)) if doms else table[0])


def brute_product(f: Factor, g: Factor) -> dict:
    names = sorted(set(f.names) | set(g.names))
    out = {}
    for bits in itertools.product((False, True), repeat=len(names)):
        a = dict(zip(names, bits))
        out[bits] = f.value({x: a[x] for x in f.names}) * g.value({x: a[x] for x in g.names})
    return out


def test_bernoulli_entries():
    f = bernoulli_factor(VarDomain("X"), 0.2)
    assert f[{"X": True}] == pytest.approx(0.2)
    assert f[{"X": False}] == pytest.approx(0.8)


def test_observed_domain_keeps_one_value():
    f = bernoulli_factor(VarDomain("X", True), 0.2)
    assert list(f.items()) == [({"X": True}, pytest.approx(0.2))]


def test_cpt_factor_scope_and_rows():
    x, y = VarDomain("X"), VarDomain("Y")
    f = cpt_factor(y, [x], {(True,): 0.7, (False,): 0.01})
    assert f.names == ("X", "Y")
    assert f[{"X": True, "Y": True}] == pytest.approx(0.7)
    assert f[{"X": False, "Y": False}] == pytest.approx(0.99)


def test_product_of_evidence_network():
    r = bernoulli_factor(VarDomain("R"), 0.2)
    w = cpt_factor(VarDomain("W", True), [VarDomain("R")], {(True,): 0.7, (False,): 0.01})
    joint = product(r, w)
    assert joint[{"R": True, "W": True}] == pytest.approx(0.14, abs=1e-12)
    assert joint[{"R": False, "W": True}] == pytest.approx(0.008, abs=1e-12)
    post, mass = normalize_posterior(joint)
    assert mass == pytest.approx(0.148, abs=1e-12)
    assert post[{"R": True, "W": True}] == pytest.approx(0.9459, abs=1e-3)


def test_sum_out_unknown_name():
    with pytest.raises(UnknownName):
        sum_out(bernoulli_factor(VarDomain("X"), 0.5), ["Y"])


def test_domain_mismatch_in_product():
    a = bernoulli_factor(VarDomain("X"), 0.5)
    b = bernoulli_factor(VarDomain("X", True), 0.5)
    with pytest.raises(DomainMismatch):
        product(a, b)


def test_zero_evidence():
    f = Factor([VarDomain("X", False)], [0.0])
    with pytest.raises(ZeroEvidence):
        normalize_posterior(f)


def test_unit_and_scalar():
    assert product(ONE, bernoulli_factor(VarDomain("X"), 0.3)).allclose(bernoulli_factor(VarDomain("X"), 0.3))
    assert scalar(2.0).total() == 2.0
    assert unit([VarDomain("X")]).total() == 2.0


def test_product_accounting_counts_result_entries():
    acct = Accounting()
    a = bernoulli_factor(VarDomain("X"), 0.5)
    b = cpt_factor(VarDomain("Y"), [VarDomain("X")], {(True,): 0.5, (False,): 0.5})
    c = cpt_factor(VarDomain("Z"), [VarDomain("Y")], {(True,): 0.5, (False,): 0.5})
    product_many([a, b, c], acct)
    assert acct.multiplications == 2 * 8
    sum_out(product(a, b), ["X"], acct)
    assert acct.additions == 2


def test_json_round_trip():
    f = cpt_factor(VarDomain("Y", True), [VarDomain("X")], {(True,): 0.25, (False,): 0.5})
    data = json.loads(f.dumps())
    assert data["scope"] == [{"name": "X", "observed": None}, {"name": "Y", "observed": True}]
    assert Factor.from_json(data) == f


@given(factors(), factors())
def test_product_is_commutative_and_pointwise(f, g):
    fg, gf = product(f, g), product(g, f)
    assert fg.allclose(gf)
    expected = brute_product(f, g)
    for a, v in fg.items():
        assert v == pytest.approx(expected[tuple(a[x] for x in fg.names)], abs=1e-12)


@given(factors(), factors(), factors())
def test_product_is_associative(f, g, h):
    assert product(product(f, g), h).allclose(product(f, product(g, h)))


@given(factors(st.sets(st.sampled_from(NAMES), min_size=1, max_size=3)))
def test_sum_out_preserves_total(f):
    assert sum_out(f, [f.names[0]]).total() == pytest.approx(f.total(), abs=1e-12)


@settings(max_examples=200)
@given(factors(st.sets(st.sampled_from(["A", "B"]), max_size=2)),
       factors(st.sets(st.sampled_from(["B", "C", "D"]), max_size=3)))
def test_distributivity_under_disjointness(f1, f2):
    # Sum out names that f1 does not mention.
    z = [x for x in f2.names if x not in f1.names]
    lhs = sum_out(product(f1, f2), z)
    rhs = product(f1, sum_out(f2, z))
    assert lhs.allclose(rhs, atol=1e-12)


def test_distributivity_fails_without_disjointness():
    a = Factor([VarDomain("Z")], [0.1, 0.9])
    b = Factor([VarDomain("Z")], [0.9, 0.1])
    lhs = sum_out(product(a, b), ["Z"])
    rhs = product(sum_out(a, ["Z"]), sum_out(b, ["Z"]))
    assert not lhs.allclose(rhs)
