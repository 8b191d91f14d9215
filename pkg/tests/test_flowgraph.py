from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from hobn.errors import WellFormednessViolation
from hobn.factors import sum_out
from hobn.flowgraph import (
    Edge, FlowGraph, Position, bn_semantics, build_flow, collapse, export_dot,
    extract_bn, is_acyclic, max_same_name_parents, named_components,
)
from hobn.generate import name_clash_derivation, random_first_order, random_higher_order
from hobn.semantics import interpret_global
from hobn.syntax import parse
from hobn.types import Atom, infer_ground, infer_low

from conftest import GOLDEN, derivation

SPRINKLER_EDGES = {("X1", "X2"), ("X1", "X3"), ("X2", "X4"), ("X3", "X4")}


def extraction_preserves_semantics(d) -> bool:
    g = interpret_global(d)
    joint = bn_semantics(extract_bn(d))
    return sum_out(joint, [x for x in joint.names if x not in g.names]).allclose(g, atol=1e-12)


def single_chain():
    src = """let d = sample bern(0.6) in
    let s = case d of { t => sample bern(0.2); f => sample bern(0.75) } in
    let r = case d of { t => sample bern(0.8); f => sample bern(0.1) } in
    let w = case <s, r> of { <t,t> => sample bern(0.99); <t,f> => sample bern(0.7);
                             <f,t> => sample bern(0.9); <f,f> => sample bern(0.01) } in
    w"""
    from hobn.syntax import load

    return infer_ground(load(src))


def test_annotated_sprinkler_has_nineteen_positions():
    g = build_flow(single_chain())
    assert len(g.vertices) == 19
    assert is_acyclic(g)
    assert collapse(g) == SPRINKLER_EDGES


def test_sprinkler_components_are_rooted_at_axioms():
    g = build_flow(single_chain())
    comps = named_components(g)
    assert set(comps) == {"X1", "X2", "X3", "X4"}
    for name, c in comps.items():
        assert c.root == g.roots[name]
        assert c.root.slot == ("type",)


def test_single_sample_axiom():
    g = build_flow(infer_low(parse("sample bern(0.5)")))
    assert len(g.vertices) == 1 and g.edges == []
    assert list(named_components(g)) == ["X1"]


def test_variable_axiom_edge_runs_context_to_subject():
    d = infer_low(parse("x"), {"x": Atom("X")})
    g = build_flow(d)
    assert len(g.edges) == 1
    e = g.edges[0]
    assert e.src.slot == ("ctx", "x") and e.dst.slot == ("type",)
    assert e.src.polarity == "up" and e.dst.polarity == "down"


def test_two_cycle_is_detected():
    a = Position(0, ("type",), (), "X", None, "down")
    b = Position(1, ("type",), (), "X", None, "down")
    g = FlowGraph([a, b], [Edge(a, b, "flow"), Edge(b, a, "flow")])
    assert not is_acyclic(g)


def test_split_component_is_a_violation():
    a = Position(0, ("type",), (), "X", None, "down")
    b = Position(1, ("type",), (), "X", None, "down")
    g = FlowGraph([a, b], [], {"X": a})
    with pytest.raises(WellFormednessViolation):
        named_components(g)


def test_two_same_name_parents_is_a_violation():
    a, b, c = (Position(i, ("type",), (), "X", None, "down") for i in range(3))
    g = FlowGraph([a, b, c], [Edge(a, c, "flow"), Edge(b, c, "flow")])
    with pytest.raises(WellFormednessViolation):
        named_components(g)


def test_name_clash_derivation_breaks_the_named_tree():
    g = build_flow(name_clash_derivation())
    with pytest.raises(WellFormednessViolation):
        named_components(g)


def test_two_coins_network():
    d = derivation("two_coins")
    bn = extract_bn(d, debug_collapse=True)
    assert sorted(bn.edges) == [("X1", "X2"), ("X1", "X3")]
    g = build_flow(d)
    assert is_acyclic(g)
    comps = named_components(g)
    # The thunk's multiset type carries both flips.
    multiset = [p for p in comps["X2"].positions if any(not isinstance(s, str) for s in p.path)]
    assert multiset


def test_hmm2_network_shape():
    bn = extract_bn(derivation("hmm2"))
    assert sorted(bn.edges) == [("X1", "X2"), ("X2", "X3"), ("X2", "X4"), ("X4", "X5")]
    assert bn.is_dag()


def test_sprinkler_network_tables():
    bn = extract_bn(derivation("sprinkler"))
    assert bn.edges == SPRINKLER_EDGES
    joint = bn_semantics(bn)
    assert joint[{"X1": True, "X2": True, "X3": True, "X4": True}] == pytest.approx(0.09504, abs=1e-12)
    for node in bn.nodes.values():
        assert set(node.cpt.names) == {node.name, *node.parents}


def test_evidence_network_semantics():
    joint = bn_semantics(extract_bn(derivation("evidence")))
    assert sorted(v for _, v in joint.items()) == pytest.approx([0.008, 0.14])


def test_single_node_network():
    bn = extract_bn(infer_low(parse("sample bern(0.2)")))
    assert bn_semantics(bn) == bn.nodes["X1"].cpt


def test_open_term_gives_a_conditional_network():
    d = infer_low(parse("case y of { t => sample bern(0.7); f => sample bern(0.4) }"), {"y": Atom("Y")})
    bn = extract_bn(d)
    assert bn.conditional
    assert bn.edges == {("Y", "X1")}


def test_bn_json_schema():
    data = extract_bn(derivation("evidence")).to_json()
    assert data["query"] == ["X1", "X2"]
    node = data["nodes"][1]
    assert node["name"] == "X2" and node["parents"] == ["X1"]
    assert set(node["cpt"]) == {"scope", "table"}


def test_dot_export():
    assert export_dot(FlowGraph([], [])) == "digraph G {}"
    text = export_dot(extract_bn(derivation("sprinkler")))
    assert text.count("->") == 4
    assert text.count("[label=") == 4
    assert export_dot(extract_bn(derivation("sprinkler"))) == text
    flow = export_dot(build_flow(single_chain()))
    assert flow.count("[label=") == 19


def test_dot_marks_observed_nodes():
    assert "observed" in export_dot(extract_bn(derivation("evidence")))


@pytest.mark.parametrize("name", GOLDEN)
def test_corpus_flow_graphs(name):
    d = derivation(name)
    g = build_flow(d)
    assert is_acyclic(g)
    assert max_same_name_parents(g) <= 1
    named_components(g)
    for e in g.same_name_edges():
        assert e.src.name == e.dst.name
    assert extraction_preserves_semantics(d)
    extract_bn(d, debug_collapse=True)


@settings(max_examples=100, deadline=None)
@given(st.randoms(use_true_random=False))
def test_random_first_order_flow(rng):
    d = infer_low(random_first_order(rng))
    g = build_flow(d)
    assert is_acyclic(g)
    named_components(g)
    assert extraction_preserves_semantics(d)
    assert extract_bn(d, debug_collapse=True).is_dag()


@settings(max_examples=50, deadline=None)
@given(st.randoms(use_true_random=False))
def test_random_higher_order_flow(rng):
    d = infer_ground(random_higher_order(rng, 3))
    g = build_flow(d)
    assert is_acyclic(g)
    named_components(g)
    assert extraction_preserves_semantics(d)
