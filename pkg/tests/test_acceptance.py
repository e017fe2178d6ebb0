"""Acceptance gate: every numbered criterion at its stated tolerance.

Each test runs one criterion of the suite behind ``phicalc verify-paper``
against the unit torus model and prints its verdict line.  Criteria carry
their own runtime budgets, asserted here as well.
"""

import pytest

from phicalc import acceptance
from phicalc.models import ModelGeometry

MODEL = ModelGeometry()  # a = 1, one 2*pi base circle, one 2*pi fiber circle


@pytest.fixture(scope="module")
def results():
    res = {}
    for crit in acceptance.CRITERIA:
        r = crit(MODEL)
        print(r.line)
        res[r.number] = r
    return res


def _check(res, details_keys=()):
    assert res.passed, res.details
    assert res.elapsed < res.limit
    for key in details_keys:
        assert key in res.details


def test_criterion_1_index_algebra(results):
    res = results[1]
    _check(res, ["empty_identities", "random_sets"])
    assert all(res.details["empty_identities"].values())
    assert res.details["random_sets"]["count"] == 1000
    assert res.details["random_sets"]["mismatches"] == 0


def test_criterion_2_composition_reproduction(results):
    res = results[2]
    _check(res, ["pairs", "evaluations", "mismatches"])
    assert res.details["pairs"] == 200
    assert res.details["evaluations"] == 800  # 200 pairs x (a, b_dim) in {1,2}^2
    assert res.details["mismatches"] == 0


def test_criterion_3_parametrix_grid(results):
    res = results[3]
    _check(res, ["instances", "failures"])
    assert res.details["instances"] == 13
    assert res.details["failures"] == []


def test_criterion_4_model_spectrum(results):
    res = results[4]
    _check(res, ["roots", "pole_order_k_at_0"])
    assert [round(r) for r in res.details["roots"]] == [-2, -1, 0, 1, 2]
    assert max(abs(r - round(r)) for r in res.details["roots"]) < 1e-8
    assert res.details["pole_order_k_at_0"] == 1


def test_criterion_5_normal_family_gap(results):
    res = results[5]
    _check(res, ["max_error", "min_gap"])
    assert res.details["max_error"] < 1e-6
    assert abs(res.details["min_gap"] - 1.0) < 1e-6


def test_criterion_6_decay_verification(results):
    res = results[6]
    _check(res, ["checks", "convergence_ratios", "rows"])
    assert all(res.details["checks"].values())
    assert all(3.6 <= r <= 4.4 for r in res.details["convergence_ratios"])
    for row in res.details["rows"]:
        base, fiber = row["mode"]
        if any(fiber):
            assert row["superpoly"]
        elif row["in_L2"]:
            assert row["exponent"] > 0
            assert row["matched"] is not None
            assert abs(row["exponent"] - row["matched"]) <= 0.02 * row["matched"]


def test_criterion_7_fredholm_gates(results):
    res = results[7]
    _check(res, ["wrong", "spectrum"])
    assert res.details["wrong"] == []
    assert res.details["spectrum"] == [-2, -1, 0, 1, 2] or set(res.details["spectrum"]) >= {-2, -1, 0, 1, 2}


def test_all_criteria_pass(results):
    assert all(r.passed for r in results.values())
