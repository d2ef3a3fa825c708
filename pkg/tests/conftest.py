import copy
import sys
from pathlib import Path

import pytest

SPECS = Path(__file__).resolve().parents[1] / "specs"


def law(kind, **params):
    return {"type": kind, "params": params}


def glm_doc(law_doc, beta, prior=None, eps=1.0):
    """Root ``x`` observed through one matrix and an additive Gaussian leaf ``y``."""
    return {
        "nodes": [
            {"id": "x", "kind": "var"},
            {"id": "y", "kind": "obs", "channel": {"type": "additive", "eps": eps}},
        ],
        "edges": [{"parent": "x", "child": "y", "law": law_doc, "beta": beta}],
        "root": {"id": "x", "prior": prior or {"type": "gaussian", "variance": 1.0}},
    }


CHAIN = {
    "nodes": [
        {"id": "x1", "kind": "var"},
        {"id": "x2", "kind": "var", "channel": {"type": "additive", "eps": 1.0}},
        {"id": "y", "kind": "obs", "channel": {"type": "additive", "eps": 1.0}},
    ],
    "edges": [
        {"parent": "x1", "child": "x2", "law": law("marchenko_pastur", beta=1.0), "beta": 1.0},
        {"parent": "x2", "child": "y", "law": law("bernoulli", beta=0.5), "beta": 0.5},
    ],
    "root": {"id": "x1", "prior": {"type": "gaussian", "variance": 1.0}},
}


@pytest.fixture
def chain_doc():
    return copy.deepcopy(CHAIN)


@pytest.fixture
def specs_dir():
    return SPECS


def pytest_terminal_summary(terminalreporter):
    lines = getattr(sys.modules.get("test_acceptance"), "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
