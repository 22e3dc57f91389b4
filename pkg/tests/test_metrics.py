import json

import numpy as np
import pytest

from fairdecide.core import ShapeError
from fairdecide.metrics import (
    conditional_sp,
    equal_count_bins,
    fairness_report,
    sufficiency_test,
)


def hand_case():
    # group a: TP, FP, FN, TN ; group b: TP, TP, FN, TN
    d = [1, 1, 0, 0, 1, 1, 0, 0]
    y = [1, 0, 1, 0, 1, 1, 1, 0]
    g = ["a"] * 4 + ["b"] * 4
    return d, y, g


def test_hand_computed_rates():
    rep = fairness_report(*hand_case())
    a, b = rep.rates["a"], rep.rates["b"]
    assert a["acceptance_rate"] == 0.5 and b["acceptance_rate"] == 0.5
    assert a["tpr"] == 0.5 and b["tpr"] == pytest.approx(2 / 3)
    assert a["fpr"] == 0.5 and b["fpr"] == 0.0
    assert a["ppv"] == 0.5 and b["ppv"] == 1.0
    assert a["for"] == 0.5 and b["for"] == 0.5
    assert a["accuracy"] == 0.5 and b["accuracy"] == 0.75
    assert rep.base_rates == {"a": 0.5, "b": 0.75}
    assert rep.differences["tpr"] == pytest.approx(0.5 - 2 / 3)
    assert rep.max_abs_difference["ppv"] == 0.5


def test_complement_identities():
    rng = np.random.default_rng(5)
    for _ in range(20):
        n = 50
        rep = fairness_report(rng.integers(0, 2, n), rng.integers(0, 2, n), rng.integers(0, 2, n))
        for r in rep.rates.values():
            if r["ppv"] is not None:
                assert r["ppv"] + r["fdr"] == pytest.approx(1.0, abs=1e-15)
            if r["for"] is not None:
                assert r["for"] + r["npv"] == pytest.approx(1.0, abs=1e-15)


def test_undefined_rates_are_flagged_not_zero():
    rep = fairness_report([0, 0, 1, 0], [0, 0, 1, 1], [0, 0, 1, 1])
    assert rep.rates[0]["tpr"] is None
    assert rep.rates[0]["ppv"] is None
    assert (0, "tpr") in rep.undefined and (0, "ppv") in rep.undefined
    assert rep.differences["tpr"] is None
    assert json.loads(rep.to_json())["rates"]["0"]["tpr"] is None
    assert "0,tpr,\r\n" in rep.to_csv()


def test_all_rates_in_unit_interval():
    rng = np.random.default_rng(0)
    rep = fairness_report(rng.integers(0, 2, 200), rng.integers(0, 2, 200), rng.integers(0, 3, 200))
    for r in rep.rates.values():
        assert all(v is None or 0 <= v <= 1 for v in r.values())


def test_misaligned_inputs():
    with pytest.raises(ShapeError):
        fairness_report([1, 0], [1], [0, 1])


def test_conditional_sp():
    d = [1, 0, 1, 1, 0, 0]
    g = [0, 0, 1, 1, 0, 1]
    lev = ["hi", "hi", "hi", "hi", "lo", "lo"]
    res = conditional_sp(d, g, lev)
    assert res.rates[(0, "hi")] == 0.5 and res.rates[(1, "hi")] == 1.0
    assert res.rates[(0, "lo")] == 0.0 and res.rates[(1, "lo")] == 0.0
    assert res.max_gap == 0.5
    sparse = conditional_sp([1, 0], [0, 1], ["x", "y"])
    assert sparse.rates[(1, "x")] is None and sparse.max_gap is None


class TestBins:
    def test_equal_counts(self):
        idx = equal_count_bins(np.arange(100), 10)
        assert np.all(np.bincount(idx) == 10)

    def test_ties_never_split(self):
        v = np.r_[np.zeros(30), np.ones(70)]
        idx = equal_count_bins(v, 4)
        assert len(set(idx[v == 0])) == 1 and len(set(idx[v == 1])) == 1


class TestSufficiencyTest:
    def test_constant_outcomes_do_not_reject(self):
        v = np.linspace(0, 1, 400)
        res = sufficiency_test(v, np.ones(400), np.tile([0, 1], 200))
        assert not res.reject
        assert all(b.difference == 0 for b in res.bins)

    def test_sparse_bins_are_flagged(self):
        v = np.arange(12, dtype=float)
        g = np.r_[np.zeros(11), 1]
        res = sufficiency_test(v, v, g, n_bins=3)
        assert [b.flagged for b in res.bins] == [True, True, True]
        assert not res.reject

    def test_shift_is_detected(self):
        rng = np.random.default_rng(1)
        v = rng.random(4000)
        g = rng.integers(0, 2, 4000)
        y = v + rng.normal(0, 1, 4000) + 0.5 * g
        res = sufficiency_test(v, y, g, group_order=(0, 1))
        assert res.reject
        assert res.corrected_level == pytest.approx(0.005)
        assert all(b.ci[1] < 0 for b in res.bins)

    def test_errors(self):
        with pytest.raises(ValueError):
            sufficiency_test([0.1, 0.2], [0, 1], [0, 0])
        with pytest.raises(ValueError):
            sufficiency_test([0.1, 0.2, 0.3], [0, 1, 1], [0, 1, 2])
        with pytest.raises(ValueError):
            sufficiency_test([0.1, 0.2], [0, 1], [0, 1], n_bins=0)
