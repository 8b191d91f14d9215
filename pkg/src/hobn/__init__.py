"""Exact inference for a higher-order probabilistic language.

Programs are normalized to Bayesian-network normal forms, typed with
named intersection types, and interpreted as factors; the typing
derivation doubles as an efficient variable-elimination schedule.
"""

from __future__ import annotations

from hobn.errors import (
    CompatibilityViolation, DomainMismatch, FuelExhausted, HobnError, InferenceError,
    ParseError, UnknownName, WellFormednessViolation, ZeroEvidence,
)
from hobn.factors import Factor, VarDomain, product, product_many, sum_out
from hobn.flowgraph import bn_semantics, build_flow, export_dot, extract_bn, is_acyclic, named_components
from hobn.rewrite import normalize, reduction_graph
from hobn.semantics import cost, interpret_global, interpret_inductive, posterior_query
from hobn.syntax import load, parse, pretty
from hobn.types import Derivation, check, infer_ground, infer_low

__all__ = [
    "CompatibilityViolation", "Derivation", "DomainMismatch", "Factor", "FuelExhausted",
    "HobnError", "InferenceError", "ParseError", "UnknownName", "VarDomain",
    "WellFormednessViolation", "ZeroEvidence", "bn_semantics", "build_flow", "check", "cost",
    "export_dot", "extract_bn", "infer_ground", "infer_low", "interpret_global",
    "interpret_inductive", "is_acyclic", "load", "named_components", "normalize", "parse",
    "posterior_query", "pretty", "product", "product_many", "reduction_graph", "sum_out",
]
