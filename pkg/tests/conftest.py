from __future__ import annotations

from functools import lru_cache
from pathlib import Path

import pytest

from hobn.syntax import load
from hobn.terms import Term
from hobn.types import Derivation, infer_ground, infer_with_trace

CORPUS = Path(__file__).resolve().parent.parent / "corpus"

GOLDEN = [
    "sprinkler", "sprinkler_posterior", "evidence", "two_coins", "coin_learning",
    "chain_t1", "chain_t2", "hmm1", "hmm2", "hmm3",
]


def source(name: str) -> str:
    return (CORPUS / f"{name}.hobn").read_text()


@lru_cache(maxsize=None)
def term(name: str) -> Term:
    return load(source(name))


@lru_cache(maxsize=None)
def derivation(name: str) -> Derivation:
    return infer_ground(term(name))


@lru_cache(maxsize=None)
def traced(name: str):
    return infer_with_trace(term(name))


@pytest.fixture
def corpus_dir() -> Path:
    return CORPUS


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
