"""Group fairness metrics and the binned sufficiency test."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy import stats

from .core import ShapeError

RATES = ("acceptance_rate", "tpr", "fpr", "ppv", "for", "accuracy")
COMPLEMENTS = ("fdr", "npv")


def _ratio(num: float, den: float) -> float | None:
    return None if den == 0 else float(num / den)


def _groups_of(groups, order: Sequence | None) -> tuple:
    if order:
        return tuple(order)
    seen = {}
    for g in np.asarray(groups).tolist():
        seen.setdefault(g, None)
    return tuple(seen)


def _aligned(*arrays):
    arrs = [np.asarray(a).ravel() for a in arrays]
    if len({a.size for a in arrs}) != 1:
        raise ShapeError("inputs must have equal length")
    return arrs


@dataclass
class FairnessReport:
    """Per-group rates; ``None`` marks an undefined rate (empty denominator)."""

    groups: tuple
    rates: dict
    base_rates: dict
    counts: dict
    differences: dict
    max_abs_difference: dict
    undefined: list = field(default_factory=list)

    def rate(self, group, metric: str) -> float | None:
        return self.rates[group][metric]

    def to_json(self) -> str:
        return json.dumps(
            {
                "groups": [str(g) for g in self.groups],
                "rates": {str(g): v for g, v in self.rates.items()},
                "base_rates": {str(g): v for g, v in self.base_rates.items()},
                "counts": {str(g): v for g, v in self.counts.items()},
                "differences": self.differences,
                "max_abs_difference": self.max_abs_difference,
                "undefined": [[str(g), m] for g, m in self.undefined],
            },
            indent=2,
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["group", "metric", "value"])
        for g in self.groups:
            for m, v in self.rates[g].items():
                w.writerow([g, m, "" if v is None else f"{v:.6g}"])
        return buf.getvalue()


def fairness_report(d, labels, groups, group_order: Sequence | None = None) -> FairnessReport:
    d, y, grp = _aligned(d, labels, groups)
    d = d.astype(float)
    y = y.astype(float)
    order = _groups_of(grp, group_order)
    rates, brs, counts, undefined = {}, {}, {}, []
    for g in order:
        m = grp == g
        dg, yg = d[m], y[m]
        n = m.sum()
        tp = float(np.sum(dg * yg))
        fp = float(np.sum(dg * (1 - yg)))
        fn = float(np.sum((1 - dg) * yg))
        tn = float(np.sum((1 - dg) * (1 - yg)))
        r = {
            "acceptance_rate": _ratio(tp + fp, n),
            "tpr": _ratio(tp, tp + fn),
            "fpr": _ratio(fp, fp + tn),
            "ppv": _ratio(tp, tp + fp),
            "for": _ratio(fn, fn + tn),
            "accuracy": _ratio(tp + tn, n),
            "fdr": _ratio(fp, tp + fp),
            "npv": _ratio(tn, fn + tn),
        }
        rates[g] = r
        brs[g] = _ratio(tp + fn, n)
        counts[g] = int(n)
        undefined += [(g, k) for k, v in r.items() if v is None]
    diffs, maxabs = {}, {}
    for k in RATES:
        vals = [rates[g][k] for g in order]
        diffs[k] = None if len(order) < 2 or None in vals[:2] else vals[0] - vals[1]
        maxabs[k] = None if None in vals or len(vals) < 2 else max(vals) - min(vals)
    return FairnessReport(order, rates, brs, counts, diffs, maxabs, undefined)


@dataclass
class ConditionalParity:
    rates: dict  # (group, level) -> rate or None
    max_gap: float | None


def conditional_sp(d, groups, legit, group_order: Sequence | None = None) -> ConditionalParity:
    """Acceptance rate per (group, legitimate level); max gap across groups
    taken within each level and then over levels."""
    d, grp, lev = _aligned(d, groups, legit)
    order = _groups_of(grp, group_order)
    levels = _groups_of(lev, None)
    table = {}
    gap = None
    for lv in levels:
        vals = []
        for g in order:
            m = (grp == g) & (lev == lv)
            r = _ratio(float(d[m].sum()), m.sum())
            table[(g, lv)] = r
            vals.append(r)
        defined = [v for v in vals if v is not None]
        if len(defined) >= 2:
            spread = max(defined) - min(defined)
            gap = spread if gap is None else max(gap, spread)
    return ConditionalParity(table, gap)


@dataclass
class BinResult:
    lo: float
    hi: float
    n: dict
    mean: dict
    difference: float | None
    ci: tuple | None
    p_value: float | None
    flagged: bool


@dataclass
class SufficiencyTestResult:
    groups: tuple
    bins: list
    alpha_level: float
    corrected_level: float
    reject: bool

    @property
    def p_values(self) -> list:
        return [b.p_value for b in self.bins]


def equal_count_bins(values, n_bins: int) -> np.ndarray:
    """Bin index per value; equal-count cut points, ties go to the lower bin."""
    v = np.asarray(values, dtype=float)
    s = np.sort(v)
    n = s.size
    cuts = [s[int(np.ceil(k * n / n_bins)) - 1] for k in range(1, n_bins)]
    return np.searchsorted(np.asarray(cuts), v, side="left")


def sufficiency_test(decision_values, outcomes, groups, n_bins: int = 10,
                     alpha_level: float = 0.05,
                     group_order: Sequence | None = None) -> SufficiencyTestResult:
    """Per-bin Welch t-test of E[outcome | bin, group], Bonferroni across bins.

    Bins with fewer than two members of either group are flagged and skipped.
    """
    v, y, grp = _aligned(decision_values, outcomes, groups)
    y = y.astype(float)
    order = _groups_of(grp, group_order)
    if len(order) != 2:
        raise ValueError("sufficiency test needs exactly two groups")
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    for g in order:
        if not np.any(grp == g):
            raise ValueError(f"group {g!r} absent from every bin")
    idx = equal_count_bins(v, n_bins)
    raw = []
    for b in range(n_bins):
        m = idx == b
        if not m.any():
            continue
        parts = [y[m & (grp == g)] for g in order]
        n = {g: int(x.size) for g, x in zip(order, parts)}
        mean = {g: (float(x.mean()) if x.size else None) for g, x in zip(order, parts)}
        lo, hi = float(v[m].min()), float(v[m].max())
        if min(x.size for x in parts) < 2:
            raw.append(BinResult(lo, hi, n, mean, None, None, None, True))
            continue
        a, c = parts
        diff = float(a.mean() - c.mean())
        va, vc = a.var(ddof=1) / a.size, c.var(ddof=1) / c.size
        se2 = va + vc
        if se2 == 0:
            # identical constant outcomes give no evidence; differing constants are certain
            pval = 1.0 if diff == 0 else 0.0
            ci = (diff, diff)
        else:
            res = stats.ttest_ind(a, c, equal_var=False)
            pval = float(res.pvalue)
            dof = se2 ** 2 / (va ** 2 / (a.size - 1) + vc ** 2 / (c.size - 1))
            h = stats.t.ppf(1 - alpha_level / 2, dof) * np.sqrt(se2)
            ci = (diff - h, diff + h)
        raw.append(BinResult(lo, hi, n, mean, diff, ci, pval, False))
    tested = [b for b in raw if not b.flagged]
    level = alpha_level / max(len(tested), 1)
    reject = any(b.p_value < level for b in tested)
    return SufficiencyTestResult(order, raw, alpha_level, level, reject)
