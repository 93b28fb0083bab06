from __future__ import annotations

import pytest

from closedattr.registry import CASES, PROVENANCE_KINDS, Expectation, get_case

EXPECTED_CASES = {
    "counterS1",
    "s1closed",
    "xaxis-funnel",
    "circle-inclusion",
    "nonuniform-strip",
    "xaxis-contraction",
    "reach-curves",
    "so3-cuts",
    "empty-cut",
}


def test_registry_is_complete():
    assert set(CASES) == EXPECTED_CASES


@pytest.mark.parametrize("name", sorted(EXPECTED_CASES))
def test_every_expectation_is_tagged(name):
    case = get_case(name)
    assert case.expectations
    for e in case.expectations:
        assert e.provenance in PROVENANCE_KINDS
        assert e.source.strip()


@pytest.mark.parametrize("name", sorted(EXPECTED_CASES))
def test_case_reproduces(name):
    rows, observed = get_case(name).run(seed=0)
    failed = [(r.key, r.observed, r.expected) for r in rows if not r.passed]
    assert not failed
    assert {r.key for r in rows} <= set(observed)


@pytest.mark.parametrize("name", ["s1closed", "xaxis-funnel", "circle-inclusion", "reach-curves"])
def test_case_is_seed_robust(name):
    rows, _ = get_case(name).run(seed=7)
    assert all(r.passed for r in rows)


class TestExpectation:
    def test_comparisons(self):
        assert Expectation("k", 1.0, "trivial", "x", "ge").holds(1.5)
        assert not Expectation("k", 1.0, "trivial", "x", "le").holds(1.5)
        assert Expectation("k", [1.0, 2.0], "trivial", "x", tol=0.1).holds([1.05, 1.95])
        assert not Expectation("k", 3, "trivial", "x").holds(None)

    def test_rejects_unknown_provenance(self):
        with pytest.raises(ValueError):
            Expectation("k", 1, "folklore", "x")

    def test_rejects_missing_source(self):
        with pytest.raises(ValueError):
            Expectation("k", 1, "derived", "")


def test_unknown_case():
    with pytest.raises(KeyError):
        get_case("lorenz")
