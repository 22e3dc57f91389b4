"""Decision-subject utilities, patterns of justice and fairness/utility fronts."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from .core import (
    ConfigError,
    DecisionRule,
    GroupInterval,
    ScoredPopulation,
    ShapeError,
    Utility,
    UtilityMatrix,
    apply_rule,
    gains,
)


# Claim differentiators -----------------------------------------------------

@dataclass(frozen=True)
class NoDifferentiator:
    """Everyone holds the same claim."""


@dataclass(frozen=True)
class OnLabel:
    values: frozenset = frozenset({1})

    def __post_init__(self):
        if not self.values:
            raise ConfigError("relevant value set must be nonempty")


@dataclass(frozen=True)
class OnDecision:
    values: frozenset = frozenset({1})

    def __post_init__(self):
        if not self.values:
            raise ConfigError("relevant value set must be nonempty")


@dataclass(frozen=True, eq=False)
class OnFeature:
    column: np.ndarray
    values: frozenset

    def __post_init__(self):
        if not self.values:
            raise ConfigError("relevant value set must be nonempty")
        object.__setattr__(self, "column", np.asarray(self.column).ravel())


ClaimDifferentiator = NoDifferentiator | OnLabel | OnDecision | OnFeature


def _claim_mask(J, d, y, n) -> np.ndarray:
    if J is None or isinstance(J, NoDifferentiator):
        return np.ones(n, dtype=bool)
    if isinstance(J, OnLabel):
        if y is None:
            raise ConfigError("labels required for a label-based claim differentiator")
        return np.isin(y, list(J.values))
    if isinstance(J, OnDecision):
        return np.isin(d, list(J.values))
    if isinstance(J, OnFeature):
        if J.column.size != n:
            raise ShapeError("feature column length differs from population")
        return np.isin(J.column, list(J.values))
    raise ConfigError(f"unknown claim differentiator {J!r}")


def individual_utility(d, y, W: UtilityMatrix):
    """u = w11*d*y + w10*d*(1-y) + w01*(1-d)*y + w00*(1-d)*(1-y).

    Fractional y gives the expected utility under P(Y=1) = y."""
    d = np.asarray(d, dtype=float)
    y = np.asarray(y, dtype=float)
    return W.w11 * d * y + W.w10 * d * (1 - y) + W.w01 * (1 - d) * y + W.w00 * (1 - d) * (1 - y)


def ds_utility(d, labels, groups, W: UtilityMatrix, J=None,
               group_order: Sequence | None = None) -> dict:
    """Mean decision-subject utility per group among claim holders.

    A group with no claim holders maps to None."""
    d = np.asarray(d, dtype=float).ravel()
    grp = np.asarray(groups).ravel()
    if grp.size != d.size:
        raise ShapeError("decisions and groups differ in length")
    if labels is None:
        if W.uses_label():
            raise ConfigError("labels required: utility matrix depends on the label")
        y = None
        ylike = np.zeros(d.size)
    else:
        y = np.asarray(labels, dtype=float).ravel()
        if y.size != d.size:
            raise ShapeError("labels and decisions differ in length")
        ylike = y
    order = tuple(group_order) if group_order else tuple(dict.fromkeys(grp.tolist()))
    claim = _claim_mask(J, d, y, d.size)
    out = {}
    for g in order:
        m = (grp == g) & claim
        if not m.any():
            out[g] = None
            continue
        out[g] = float(individual_utility(d[m], ylike[m], W.for_group(g)).mean())
    return out


def egalitarian_score(group_utilities: Mapping) -> float | None:
    """|E0 - E1|, or the largest pairwise gap for more groups."""
    vals = list(group_utilities.values())
    if any(v is None for v in vals):
        return None
    if len(vals) < 2:
        return 0.0
    return float(max(vals) - min(vals))


# Patterns of justice -------------------------------------------------------

@dataclass(frozen=True)
class Egalitarian:
    eps: float = 1e-9

    def fairness(self, utilities: Mapping) -> float:
        """Higher is fairer: the negated egalitarian score."""
        return -egalitarian_score(utilities)


@dataclass(frozen=True)
class Maximin:
    def fairness(self, utilities: Mapping) -> float:
        return float(min(utilities.values()))


@dataclass(frozen=True)
class Prioritarian:
    """k times the worst-off group plus the other groups."""

    k: float = 2.0

    def __post_init__(self):
        if not self.k > 1:
            raise ConfigError("prioritarian weight k must exceed 1")

    def fairness(self, utilities: Mapping) -> float:
        vals = sorted(utilities.values())
        return float(self.k * vals[0] + sum(vals[1:]))


@dataclass(frozen=True)
class Sufficientarian:
    t: float

    def fairness(self, utilities: Mapping) -> float:
        """Shortfall-free margin: min utility minus the threshold."""
        return float(min(utilities.values()) - self.t)


PatternOfJustice = Egalitarian | Maximin | Prioritarian | Sufficientarian


@dataclass
class PatternEvaluation:
    rule: Any
    utilities: dict
    score: float | None
    satisfied: bool
    excluded: bool = False


def pattern_satisfied(pattern, rule_space: Sequence, pop: ScoredPopulation, labels,
                      W: UtilityMatrix, J=None, seed: int = 0) -> list:
    """Evaluate a pattern on each rule.

    Maximin and prioritarian are comparative: a rule satisfies them when its
    score is the best in ``rule_space``. Rules with an undefined group
    utility are excluded with a warning."""
    if not rule_space:
        raise ConfigError("rule_space must be nonempty")
    evals = []
    for rule in rule_space:
        d = apply_rule(rule, pop, seed)
        ut = ds_utility(d, labels, pop.group, W, J, pop.groups)
        if any(v is None for v in ut.values()):
            warnings.warn(f"rule {rule!r} leaves a group without claim holders; excluded")
            evals.append(PatternEvaluation(rule, ut, None, False, True))
            continue
        if isinstance(pattern, Egalitarian):
            score = egalitarian_score(ut)
            ok = score <= pattern.eps
        elif isinstance(pattern, Sufficientarian):
            score = min(ut.values())
            ok = score >= pattern.t
        else:
            score = pattern.fairness(ut)
            ok = False
        evals.append(PatternEvaluation(rule, ut, score, ok))
    if isinstance(pattern, (Maximin, Prioritarian)):
        scores = [e.score for e in evals if not e.excluded]
        if scores:
            top = max(scores)
            for e in evals:
                e.satisfied = not e.excluded and math.isclose(e.score, top, rel_tol=0, abs_tol=1e-12)
    return evals


# Pareto front ---------------------------------------------------------------

@dataclass
class ParetoPoint:
    rule: GroupInterval
    dm_utility: float
    fairness_score: float
    group_utilities: dict


@dataclass
class ParetoFront:
    points: list
    n_candidates: int
    n_evaluated: int

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["tau_lo_g0", "tau_hi_g0", "tau_lo_g1", "tau_hi_g1",
                        "dm_utility", "fairness_score", "u_g0", "u_g1"])
            for pt in self.points:
                (g0, (a, b)), (g1, (c, e)) = list(pt.rule.intervals.items())
                w.writerow([f"{v:.6g}" for v in (a, b, c, e, pt.dm_utility, pt.fairness_score,
                                                 pt.group_utilities[g0], pt.group_utilities[g1])])


def candidate_intervals(bins: int) -> list:
    """Lower-bound [i/bins, 1] and upper-bound [0, i/bins] rules, i = 0..bins."""
    taus = [i / bins for i in range(bins + 1)]
    return [(t, 1.0) for t in taus] + [(0.0, t) for t in taus]


def pareto_front(pop: ScoredPopulation, labels, u_dm: Utility, W: UtilityMatrix, J=None,
                 pattern=Maximin(), bins: int = 100) -> ParetoFront:
    """Non-dominated (fairness, decision-maker utility) pairs over per-group
    interval rules. ``dm_utility`` is the mean expected utility per individual;
    higher is better on both axes. Identical points are reported once."""
    if len(pop.groups) != 2:
        raise ConfigError("pareto_front needs exactly two groups")
    if bins < 2:
        raise ConfigError("bins must be >= 2")
    rules = candidate_intervals(bins)
    g = gains(pop, u_dm)
    y = None if labels is None else np.asarray(labels, dtype=float)
    on_decision = isinstance(J, OnDecision)
    claim = None if on_decision else _claim_mask(J, None, y, pop.n)
    ylike = np.zeros(pop.n) if y is None else y
    per = []
    for k, grp in enumerate(pop.groups):
        m = pop.codes == k
        p, gm, ym = pop.p[m], g[m], ylike[m]
        Wg = W.for_group(grp)
        dmu, dsu = [], []
        for lo, hi in rules:
            d = ((p >= lo) & (p <= hi)).astype(float)
            cm = np.isin(d, list(J.values)) if on_decision else claim[m]
            dmu.append(float(np.dot(gm, d)))
            dsu.append(float(individual_utility(d[cm], ym[cm], Wg).mean()) if cm.any() else np.nan)
        per.append((np.array(dmu), np.array(dsu)))
    (dm0, u0), (dm1, u1) = per
    dm = (dm0[:, None] + dm1[None, :]) / pop.n
    U0 = np.broadcast_to(u0[:, None], dm.shape)
    U1 = np.broadcast_to(u1[None, :], dm.shape)
    fair = _pattern_grid(pattern, U0, U1)
    return _front(pop, rules, dm, fair, U0, U1)


def _pattern_grid(pattern, U0, U1) -> np.ndarray:
    if isinstance(pattern, Egalitarian):
        return -np.abs(U0 - U1)
    if isinstance(pattern, Maximin):
        return np.minimum(U0, U1)
    if isinstance(pattern, Prioritarian):
        return pattern.k * np.minimum(U0, U1) + np.maximum(U0, U1)
    if isinstance(pattern, Sufficientarian):
        return np.minimum(U0, U1) - pattern.t
    raise ConfigError(f"unknown pattern {pattern!r}")


def _front(pop, rules, dm, fair, U0, U1) -> ParetoFront:
    n_cand = dm.size
    ok = np.isfinite(fair) & np.isfinite(dm)
    i0, i1 = np.nonzero(ok)
    f, u = fair[ok], dm[ok]
    # utility descending, fairness descending: a point survives if it is fairer than all before it
    order = np.lexsort((-f, -u))
    keep, best_f = [], -np.inf
    for j in order:
        if f[j] > best_f:
            keep.append(j)
            best_f = f[j]
    keep.sort(key=lambda j: (f[j], -u[j]))
    g0, g1 = pop.groups
    pts = [ParetoPoint(GroupInterval({g0: rules[i0[j]], g1: rules[i1[j]]}), float(u[j]), float(f[j]),
                       {g0: float(U0[i0[j], i1[j]]), g1: float(U1[i0[j], i1[j]])}) for j in keep]
    return ParetoFront(pts, n_cand, int(ok.sum()))
