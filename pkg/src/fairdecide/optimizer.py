"""Utility maximization under group-fairness constraints.

Every solver works on per-group *option families*: candidate selections of
one group, each with the value of the constrained statistic and its utility.
A shared window search then picks one option per group so that all
statistics fit in a window of width ``eps`` while total utility is maximal.

Families used:

* rate parity (SP, TPR, FPR): top-k by score within the constrained subset,
  which is exact for unit weights;
* PPV / FOR parity: top-n, bottom-n and single individuals, i.e. lower-bound,
  upper-bound and token selections;
* small groups (``method="exact"``): every subset of the group.

Sufficiency adds a second statistic and is solved over a grid of PPV
targets, with the group sizes for each target chosen by the same search.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np

from .core import (
    ConfigError,
    ExplicitVector,
    GroupInterval,
    ScoredPopulation,
    UniformThreshold,
    Utility,
    UtilityParams,
    WithinGroupFairness,
    gains,
    group_utility,
    within_group_fairness,
)

SLACK = 1e-12
EXACT_MAX_GROUP = 14
CAPACITY_GRID_MAX = 4001
REFINE_SEEDS = 20


class InfeasibleError(RuntimeError):
    """No decision vector satisfies the constraint."""


class ConstraintKind(str, Enum):
    NONE = "none"
    STATISTICAL_PARITY = "sp"
    TPR_PARITY = "tpr"
    FPR_PARITY = "fpr"
    PPV_PARITY = "ppv"
    FOR_PARITY = "for"
    SUFFICIENCY = "suff"


RATE_KINDS = (ConstraintKind.STATISTICAL_PARITY, ConstraintKind.TPR_PARITY, ConstraintKind.FPR_PARITY)


@dataclass(frozen=True)
class SolveConfig:
    """``labels``: "realized" uses ``pop.y`` for TPR/FPR, "expected" uses p as
    a soft label, "auto" picks realized when labels exist.
    ``method``: "exact" enumerates subsets per group, "fast" uses the
    threshold families, "auto" picks exact when every group is small."""

    grid_points: int = 201
    eps_parity: float = 0.005
    capacity: int | None = None
    seed: int = 0
    labels: str = "auto"
    method: str = "auto"

    def __post_init__(self):
        if self.grid_points < 3:
            raise ConfigError("grid_points must be >= 3")
        if not 0 < self.eps_parity < 1:
            raise ConfigError("eps_parity must lie in (0, 1)")
        if self.capacity is not None and self.capacity < 0:
            raise ConfigError("capacity must be non-negative")
        if self.labels not in ("auto", "realized", "expected"):
            raise ConfigError(f"unknown labels mode {self.labels!r}")
        if self.method not in ("auto", "exact", "fast"):
            raise ConfigError(f"unknown method {self.method!r}")


@dataclass
class SolveResult:
    constraint: ConstraintKind
    rule: Any
    decisions: np.ndarray
    utility: float
    quantities: dict
    residual: float
    eps: float
    within_group: dict
    counts: dict
    info: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.residual <= self.eps + 1e-9

    def to_dict(self) -> dict:
        return {
            "constraint": self.constraint.value,
            "rule": rule_to_dict(self.rule),
            "utility": self.utility,
            "quantities": {str(g): v for g, v in self.quantities.items()},
            "residual": self.residual,
            "eps": self.eps,
            "within_group_fair": {str(g): w.fair for g, w in self.within_group.items()},
            "within_group_violations": {str(g): w.violations for g, w in self.within_group.items()},
            "counts": {str(g): c for g, c in self.counts.items()},
            "info": self.info,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=float)


def rule_to_dict(rule) -> dict:
    if isinstance(rule, UniformThreshold):
        return {"type": "uniform_threshold", "tau": rule.tau}
    if isinstance(rule, GroupInterval):
        return {"type": "group_interval",
                "intervals": {str(g): list(v) for g, v in rule.intervals.items()}}
    if isinstance(rule, ExplicitVector):
        return {"type": "explicit_vector", "selected": int(rule.decisions.sum())}
    return {"type": type(rule).__name__}


# Basic quantities ------------------------------------------------------------

def unconstrained_threshold(u: UtilityParams) -> float:
    if not u.alpha > u.beta:
        raise ConfigError("utility requires alpha > beta")
    return -u.beta / (u.alpha - u.beta)


def extremal_mean(scores, n: int) -> tuple:
    """(mean of the n smallest, mean of the n largest) scores."""
    s = np.sort(np.asarray(scores, dtype=float))
    if not 1 <= n <= s.size:
        raise ValueError(f"n must lie in [1, {s.size}]")
    return float(s[:n].mean()), float(s[-n:].mean())


def _label_mode(pop: ScoredPopulation, cfg: SolveConfig) -> str:
    if cfg.labels == "auto":
        return "realized" if pop.y is not None else "expected"
    if cfg.labels == "realized" and pop.y is None:
        raise ConfigError("realized labels requested but population has none")
    return cfg.labels


def rate_weights(pop: ScoredPopulation, kind: ConstraintKind, mode: str) -> np.ndarray:
    if kind == ConstraintKind.STATISTICAL_PARITY:
        return np.ones(pop.n)
    lab = pop.y.astype(float) if mode == "realized" else pop.p
    return lab if kind == ConstraintKind.TPR_PARITY else 1.0 - lab


def group_quantities(pop: ScoredPopulation, d, kind: ConstraintKind, labels: str = "auto") -> dict:
    """Constrained statistic per group; None where undefined.

    Sufficiency yields (PPV, FOR) pairs. PPV and FOR are computed on the
    scores p, the quantity the decision maker controls."""
    d = np.asarray(d, dtype=float)
    mode = _label_mode(pop, SolveConfig(labels=labels)) if kind in RATE_KINDS[1:] else "expected"
    out = {}
    for k, g in enumerate(pop.groups):
        m = pop.codes == k
        dg, pg = d[m], pop.p[m]
        sel, rej = dg.sum(), (1 - dg).sum()
        ppv = None if sel == 0 else float(np.dot(dg, pg) / sel)
        fo = None if rej == 0 else float(np.dot(1 - dg, pg) / rej)
        if kind in RATE_KINDS:
            w = rate_weights(pop, kind, mode)[m]
            if w.sum() == 0:
                out[g] = None
            else:
                out[g] = float(np.dot(dg, w) / w.sum())
        elif kind == ConstraintKind.PPV_PARITY:
            out[g] = ppv
        elif kind == ConstraintKind.FOR_PARITY:
            out[g] = fo
        elif kind == ConstraintKind.SUFFICIENCY:
            out[g] = (ppv, fo)
        else:
            out[g] = None
    return out


def _spread(vals) -> float:
    """0 when all undefined, inf when only some are, else max - min."""
    defined = [v for v in vals if v is not None]
    if not defined:
        return 0.0
    if len(defined) < len(vals):
        return float("inf")
    return max(defined) - min(defined)


def parity_gap(quantities: dict, kind: ConstraintKind) -> float:
    vals = list(quantities.values())
    if kind == ConstraintKind.SUFFICIENCY:
        return max(_spread([v[0] for v in vals]), _spread([v[1] for v in vals]))
    if kind == ConstraintKind.NONE:
        return 0.0
    return _spread(vals)


# Range-max structure and window search ------------------------------------

class _RangeMax:
    """Sparse table answering argmax over half-open index ranges."""

    def __init__(self, vals: np.ndarray):
        self.v = vals
        m = vals.size
        rows = [np.arange(m)]
        k = 1
        while 2 * k <= m:
            prev = rows[-1]
            a, b = prev[: m - k], prev[k:m]
            nxt = prev.copy()
            nxt[: m - k] = np.where(vals[a] >= vals[b], a, b)
            rows.append(nxt)
            k *= 2
        self.rows = np.vstack(rows)

    def argmax(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        length = np.maximum(hi - lo, 1)
        k = np.floor(np.log2(length)).astype(np.intp)
        a = self.rows[k, lo]
        b = self.rows[k, np.maximum(hi - (1 << k), lo)]
        return np.where(self.v[a] >= self.v[b], a, b)


@dataclass
class _Options:
    """Candidate selections of one group (arrays aligned by option)."""

    stat: np.ndarray        # NaN where the statistic is undefined
    util: np.ndarray
    size: np.ndarray        # number selected
    kind: np.ndarray        # family code, see _Group.materialize
    param: np.ndarray

    def subset(self, keep: np.ndarray) -> "_Options":
        return _Options(self.stat[keep], self.util[keep], self.size[keep],
                        self.kind[keep], self.param[keep])

    @staticmethod
    def concat(parts: list) -> "_Options":
        return _Options(*(np.concatenate([getattr(p, f) for p in parts])
                          for f in ("stat", "util", "size", "kind", "param")))


def _window_search(opts: list, eps: float):
    """Best option per group with all statistics inside one window of width eps,
    or every statistic undefined. Returns (utility, [option index]) or None."""
    best = None
    undef = [np.flatnonzero(np.isnan(o.stat)) for o in opts]
    if all(u.size for u in undef):
        picks = [u[np.argmax(o.util[u])] for u, o in zip(undef, opts)]
        best = (float(sum(o.util[i] for o, i in zip(opts, picks))), picks)
    sorted_ = []
    for o in opts:
        ok = np.flatnonzero(~np.isnan(o.stat))
        if ok.size == 0:
            return best
        order = ok[np.argsort(o.stat[ok], kind="stable")]
        sorted_.append((order, o.stat[order], _RangeMax(o.util[order])))
    cands = np.unique(np.concatenate([s for _, s, _ in sorted_]))
    total = np.zeros(cands.size)
    feasible = np.ones(cands.size, dtype=bool)
    chosen = []
    for order, s, rmq in sorted_:
        lo = np.searchsorted(s, cands - SLACK, side="left")
        hi = np.searchsorted(s, cands + eps + SLACK, side="right")
        ok = lo < hi
        feasible &= ok
        arg = rmq.argmax(np.where(ok, lo, 0), np.where(ok, hi, 1))
        total += np.where(ok, rmq.v[arg], 0.0)
        chosen.append(order[arg])
    if not feasible.any():
        return best
    total[~feasible] = -np.inf
    j = int(np.argmax(total))
    if best is None or total[j] > best[0]:
        best = (float(total[j]), [c[j] for c in chosen])
    return best


# Group preparation ---------------------------------------------------------

@dataclass
class _Group:
    name: Any
    idx: np.ndarray       # global indices, sorted by score descending, ties by id
    p: np.ndarray
    g: np.ndarray
    w: np.ndarray | None
    slope: float
    b: float

    @property
    def n(self) -> int:
        return self.idx.size

    @property
    def total_p(self) -> float:
        return float(self.p.sum())

    def materialize(self, kind: int, param: int, complement: bool = False) -> np.ndarray:
        """Local selection mask (sorted order) for an option code."""
        n = self.n
        m = np.zeros(n, dtype=bool)
        if kind == 0:            # top-param
            m[:param] = True
        elif kind == 1:          # bottom-param
            m[n - param:] = True
        elif kind == 2:          # single individual at sorted position
            m[param] = True
        elif kind == 3:          # empty
            pass
        elif kind == 4:          # bit mask
            m[:] = (param >> np.arange(n)) & 1
        elif kind == 5:          # contiguous window, param = start * (n + 1) + size
            j, s = divmod(param, n + 1)
            m[j:j + s] = True
        elif kind == 6:          # free part only (rate families), param = top-k of constrained
            pass
        return ~m if complement else m


def _groups(pop: ScoredPopulation, u: Utility, w: np.ndarray | None = None) -> list:
    g_all = gains(pop, u)
    out = []
    for k, name in enumerate(pop.groups):
        m = np.flatnonzero(pop.codes == k)
        order = m[np.lexsort((pop.ids[m], -pop.p[m]))]
        up = group_utility(u, name)
        out.append(_Group(name, order, pop.p[order], g_all[order],
                          None if w is None else w[order], up.alpha - up.beta, up.beta))
    return out


def _use_exact(groups: list, cfg: SolveConfig) -> bool:
    if cfg.method == "exact":
        if max(gr.n for gr in groups) > 20:
            raise ConfigError("exact method supports groups of at most 20 members")
        return True
    return cfg.method == "auto" and max(gr.n for gr in groups) <= EXACT_MAX_GROUP


def _subsets(gr: _Group):
    n = gr.n
    masks = np.arange(1 << n, dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(n)) & 1).astype(float)
    return masks, bits


# Result assembly -----------------------------------------------------------

def rule_from_selection(pop: ScoredPopulation, d: np.ndarray):
    """GroupInterval when every group's selection is an interval of scores,
    otherwise ExplicitVector."""
    intervals = {}
    for k, g in enumerate(pop.groups):
        m = pop.codes == k
        p, dg = pop.p[m], d[m].astype(bool)
        if not dg.any():
            if not np.any(p == 1.0):
                intervals[g] = (1.0, 1.0)
            elif not np.any(p == 0.0):
                intervals[g] = (0.0, 0.0)
            else:
                return ExplicitVector(d)
            continue
        lo, hi = p[dg].min(), p[dg].max()
        inside = (p >= lo) & (p <= hi)
        if np.any(inside & ~dg):
            return ExplicitVector(d)
        lo = 0.0 if lo <= p.min() else float(lo)
        hi = 1.0 if hi >= p.max() else float(hi)
        intervals[g] = (lo, hi)
    return GroupInterval(intervals)


def _finish(pop, u, kind, d, cfg, info, labels="auto") -> SolveResult:
    d = d.astype(np.int8)
    q = group_quantities(pop, d, kind, labels)
    wgf = {g: within_group_fairness(pop, d, g) for g in pop.groups}
    counts = {g: int(d[pop.codes == k].sum()) for k, g in enumerate(pop.groups)}
    return SolveResult(kind, rule_from_selection(pop, d), d, float(np.dot(gains(pop, u), d)),
                       q, parity_gap(q, kind), cfg.eps_parity, wgf, counts, info)


def _assemble(pop, groups, picks, complement=False) -> np.ndarray:
    d = np.zeros(pop.n, dtype=np.int8)
    for gr, (kind, param) in zip(groups, picks):
        d[gr.idx[gr.materialize(int(kind), int(param), complement)]] = 1
    return d


# Unconstrained -------------------------------------------------------------

def solve_unconstrained(pop: ScoredPopulation, u: Utility, cfg: SolveConfig = SolveConfig()) -> SolveResult:
    g = gains(pop, u)
    if cfg.capacity is None:
        d = (g >= 0).astype(np.int8)
    else:
        order = np.lexsort((pop.ids, -g))
        d = np.zeros(pop.n, dtype=np.int8)
        d[order[: min(cfg.capacity, pop.n)]] = 1
    res = _finish(pop, u, ConstraintKind.NONE, d, cfg, {"method": "threshold"})
    if isinstance(u, UtilityParams) and cfg.capacity is None:
        res.rule = UniformThreshold(unconstrained_threshold(u))
    return res


# Rate parity ---------------------------------------------------------------

def _rate_options(gr: _Group, constrained: np.ndarray) -> tuple:
    """Top-k of the constrained members plus every free member with gain >= 0."""
    c = np.flatnonzero(constrained)
    free = np.flatnonzero(~constrained)
    free_sel = free[gr.g[free] >= 0]
    W = gr.w[c].sum()
    if W <= 0:
        raise ConfigError(f"group {gr.name!r}: label-conditioned subgroup is empty")
    k = np.arange(c.size + 1)
    stat = np.concatenate([[0.0], np.cumsum(gr.w[c])]) / W
    util = np.concatenate([[0.0], np.cumsum(gr.g[c])]) + gr.g[free_sel].sum()
    size = k + free_sel.size
    opts = _Options(stat, util, size, np.full(k.size, 6), k)
    return opts, c, free_sel


def solve_rate_parity(pop: ScoredPopulation, u: Utility, kind: ConstraintKind,
                      cfg: SolveConfig = SolveConfig()) -> SolveResult:
    kind = ConstraintKind(kind)
    if kind not in RATE_KINDS:
        raise ConfigError(f"{kind} is not a rate-parity constraint")
    mode = _label_mode(pop, cfg) if kind != ConstraintKind.STATISTICAL_PARITY else "expected"
    w = rate_weights(pop, kind, mode)
    groups = _groups(pop, u, w)
    if len(groups) == 1:
        return _single_group(pop, u, kind, cfg, mode)
    if _use_exact(groups, cfg):
        return _solve_exact(pop, u, kind, cfg, groups, mode)
    eps = cfg.eps_parity
    if kind == ConstraintKind.STATISTICAL_PARITY or mode == "expected":
        constrained = [np.ones(gr.n, dtype=bool) for gr in groups]
    else:
        constrained = [gr.w > 0 for gr in groups]
    built = [_rate_options(gr, c) for gr, c in zip(groups, constrained)]
    opts = [b[0] for b in built]
    if cfg.capacity is not None:
        picks = _capacity_pairs(opts, cfg.capacity, eps)
    else:
        found = _window_search(opts, eps)
        picks = None if found is None else found[1]
    if picks is None:
        raise InfeasibleError("no selection satisfies the rate-parity constraint")
    d = np.zeros(pop.n, dtype=np.int8)
    for gr, (o, c, free_sel), i in zip(groups, built, picks):
        k = int(o.param[i])
        d[gr.idx[c[:k]]] = 1
        d[gr.idx[free_sel]] = 1
    info = {"method": "fast", "labels": mode, "family": "lower-bound thresholds"}
    return _finish(pop, u, kind, d, cfg, info, mode)


def _capacity_pairs(opts: list, capacity: int, eps: float):
    """Two groups, one option per size: choose sizes summing to capacity."""
    if len(opts) != 2:
        raise ConfigError("capacity constraints support exactly two groups")
    a, b = opts
    pos_b = {int(s): i for i, s in enumerate(b.size)}
    best, pick = -np.inf, None
    for i in range(a.size.size):
        j = pos_b.get(capacity - int(a.size[i]))
        if j is None:
            continue
        if abs(a.stat[i] - b.stat[j]) <= eps + SLACK and a.util[i] + b.util[j] > best:
            best, pick = a.util[i] + b.util[j], [i, j]
    return pick


def _single_group(pop, u, kind, cfg, mode) -> SolveResult:
    res = solve_unconstrained(pop, u, cfg)
    q = group_quantities(pop, res.decisions, kind, mode)
    res.constraint, res.quantities, res.residual = kind, q, 0.0
    res.info = {"method": "single group"}
    return res


# Exact small-population backend -------------------------------------------

def _exact_options(gr: _Group, kind: ConstraintKind, pop_rate_w=None) -> tuple:
    masks, bits = _subsets(gr)
    size = bits.sum(1)
    sum_p = bits @ gr.p
    util = bits @ gr.g
    n = gr.n
    with np.errstate(invalid="ignore", divide="ignore"):
        ppv = np.where(size > 0, sum_p / size, np.nan)
        fo = np.where(size < n, (gr.total_p - sum_p) / (n - size), np.nan)
    if kind in RATE_KINDS:
        W = gr.w.sum()
        if W <= 0:
            raise ConfigError(f"group {gr.name!r}: label-conditioned subgroup is empty")
        stat = (bits @ gr.w) / W
    elif kind == ConstraintKind.PPV_PARITY:
        stat = ppv
    else:
        stat = fo
    opts = _Options(stat, util, size.astype(int), np.full(masks.size, 4), masks)
    return opts, ppv, fo


def _solve_exact(pop, u, kind, cfg, groups, mode="expected") -> SolveResult:
    eps = cfg.eps_parity
    built = [_exact_options(gr, kind) for gr in groups]
    opts = [b[0] for b in built]
    if kind == ConstraintKind.SUFFICIENCY:
        picks = _exact_sufficiency(groups, built, eps, cfg.capacity)
    elif cfg.capacity is not None:
        picks = _exact_capacity(opts, cfg.capacity, eps)
    else:
        found = _window_search(opts, eps)
        picks = None if found is None else found[1]
    if picks is None:
        raise InfeasibleError(f"no decision vector satisfies {kind.value} parity")
    d = _assemble(pop, groups, [(opts[a].kind[i], opts[a].param[i]) for a, i in enumerate(picks)])
    return _finish(pop, u, kind, d, cfg, {"method": "exact", "labels": mode}, mode)


def _size_splits(opts: list, capacity: int):
    if len(opts) != 2:
        raise ConfigError("capacity constraints support exactly two groups")
    n0 = int(opts[0].size.max())
    for k0 in range(0, n0 + 1):
        k1 = capacity - k0
        if 0 <= k1 <= int(opts[1].size.max()):
            yield [opts[0].size == k0, opts[1].size == k1]


def _exact_capacity(opts, capacity, eps):
    best = None
    for keep in _size_splits(opts, capacity):
        sub = [o.subset(k) for o, k in zip(opts, keep)]
        found = _window_search(sub, eps)
        if found and (best is None or found[0] > best[0]):
            best = (found[0], [np.flatnonzero(k)[i] for k, i in zip(keep, found[1])])
    return None if best is None else best[1]


def _exact_sufficiency(groups, built, eps, capacity):
    """Joint PPV and FOR windows over all subsets."""
    best = None
    splits = [None] if capacity is None else list(_size_splits([b[0] for b in built], capacity))
    for keep in splits:
        for case in ("none", "all", "interior"):
            sel = []
            for a, (o, ppv, fo) in enumerate(built):
                n = groups[a].n
                m = {"none": o.size == 0, "all": o.size == n,
                     "interior": (o.size > 0) & (o.size < n)}[case]
                if keep is not None:
                    m = m & keep[a]
                sel.append(np.flatnonzero(m))
            if any(s.size == 0 for s in sel):
                continue
            found = _joint_window(
                [b[0].util[s] for b, s in zip(built, sel)],
                [b[1][s] for b, s in zip(built, sel)],
                [b[2][s] for b, s in zip(built, sel)],
                eps,
            )
            if found and (best is None or found[0] > best[0]):
                best = (found[0], [s[i] for s, i in zip(sel, found[1])])
    return None if best is None else best[1]


def _joint_window(utils, ppvs, fors, eps):
    """Both statistics within eps across groups. NaN statistics must be NaN in
    every group (the dimension is then vacuous)."""
    def mk(stat, util):
        return _Options(stat, util, np.zeros(util.size, int), np.zeros(util.size, int),
                        np.arange(util.size))
    ppv_nan = all(np.isnan(p).all() for p in ppvs)
    if ppv_nan:
        return _window_search([mk(f, ut) for f, ut in zip(fors, utils)], eps)
    if all(np.isnan(f).all() for f in fors):
        return _window_search([mk(p, ut) for p, ut in zip(ppvs, utils)], eps)
    best = None
    for L in np.unique(np.concatenate(ppvs)):
        keep = [(p >= L - SLACK) & (p <= L + eps + SLACK) for p in ppvs]
        if not all(k.any() for k in keep):
            continue
        idx = [np.flatnonzero(k) for k in keep]
        found = _window_search([mk(f[i], ut[i]) for f, ut, i in zip(fors, utils, idx)], eps)
        if found and (best is None or found[0] > best[0]):
            best = (found[0], [i[j] for i, j in zip(idx, found[1])])
    return best


# PPV / FOR parity ----------------------------------------------------------

def _mean_options(gr: _Group, complement: bool) -> _Options:
    """Top-n, bottom-n and single-member sets of one group.

    With ``complement`` the sets are the *rejected* members (FOR parity) and
    utilities refer to selecting everyone else."""
    n = gr.n
    ks = np.arange(1, n + 1)
    top_mean = np.cumsum(gr.p) / ks
    bot_mean = np.cumsum(gr.p[::-1]) / ks
    top_gain = np.cumsum(gr.g)
    bot_gain = np.cumsum(gr.g[::-1])
    g_all = gr.g.sum()
    nb = n - 1
    stat = np.concatenate([top_mean, bot_mean[:nb], gr.p, [np.nan]])
    setgain = np.concatenate([top_gain, bot_gain[:nb], gr.g, [0.0]])
    size = np.concatenate([ks, ks[:nb], np.ones(n, int), [0]])
    kind = np.concatenate([np.zeros(n, int), np.ones(nb, int), np.full(n, 2), [3]])
    param = np.concatenate([ks, ks[:nb], np.arange(n), [0]])
    if complement:
        return _Options(stat, g_all - setgain, n - size, kind, param)
    return _Options(stat, setgain, size, kind, param)


def solve_ppv_parity(pop: ScoredPopulation, u: Utility, cfg: SolveConfig = SolveConfig()) -> SolveResult:
    return _solve_mean_parity(pop, u, cfg, ConstraintKind.PPV_PARITY)


def solve_for_parity(pop: ScoredPopulation, u: Utility, cfg: SolveConfig = SolveConfig()) -> SolveResult:
    return _solve_mean_parity(pop, u, cfg, ConstraintKind.FOR_PARITY)


def _solve_mean_parity(pop, u, cfg, kind) -> SolveResult:
    groups = _groups(pop, u)
    if len(groups) == 1:
        return _single_group(pop, u, kind, cfg, "expected")
    if _use_exact(groups, cfg):
        return _solve_exact(pop, u, kind, cfg, groups)
    complement = kind == ConstraintKind.FOR_PARITY
    if cfg.capacity is not None:
        return _mean_parity_capacity(pop, u, cfg, kind, groups, complement)
    opts = [_mean_options(gr, complement) for gr in groups]
    found = _window_search(opts, cfg.eps_parity)
    if found is None:
        raise InfeasibleError(f"no selection satisfies {kind.value} parity")
    picks = [(o.kind[i], o.param[i]) for o, i in zip(opts, found[1])]
    d = _assemble(pop, groups, picks, complement)
    res = _finish(pop, u, kind, d, cfg, {"method": "fast"})
    vals = [v for v in res.quantities.values() if v is not None]
    if vals:
        res.info["target"] = float(np.mean(vals))
    res.info["forms"] = {
        str(gr.name): {0: "top", 1: "bottom", 2: "single", 3: "none"}[int(k)] for gr, (k, _) in zip(groups, picks)
    }
    return res


def _closest_window(gr: _Group, size: int, t: float, tol: float):
    """Start j of the contiguous sorted window of ``size`` members whose mean
    is nearest t; threshold windows (first or last) win when within tol."""
    n = gr.n
    csum = np.concatenate([[0.0], np.cumsum(gr.p)])
    js = np.arange(0, n - size + 1)
    means = (csum[js + size] - csum[js]) / size
    if abs(means[0] - t) <= tol:
        return 0, means[0]
    if abs(means[-1] - t) <= tol:
        return js[-1], means[-1]
    j = int(np.argmin(np.abs(means - t)))
    return j, means[j]


def _mean_parity_capacity(pop, u, cfg, kind, groups, complement) -> SolveResult:
    """Fixed total selection: every group needs a set of the allotted size with
    mean near the common target (Lemma-2 construction by sliding windows)."""
    eps = cfg.eps_parity
    total_n = sum(gr.n for gr in groups)
    count = cfg.capacity if not complement else total_n - cfg.capacity
    if count < 0 or count > total_n:
        raise InfeasibleError("capacity exceeds population size")
    if count == 0:
        d = np.zeros(pop.n, dtype=np.int8) if not complement else np.ones(pop.n, dtype=np.int8)
        return _finish(pop, u, kind, d, cfg, {"method": "capacity"})
    if count == total_n:
        # every member in the mean set: the rates are the base rates
        d = np.ones(pop.n, dtype=np.int8) if not complement else np.zeros(pop.n, dtype=np.int8)
        if _spread([gr.p.mean() for gr in groups]) > eps + SLACK:
            raise InfeasibleError("forced selection violates the parity tolerance")
        return _finish(pop, u, kind, d, cfg, {"method": "capacity"})
    if count < len(groups):
        raise InfeasibleError("capacity leaves some group without a defined rate")
    points = int(min(max(cfg.grid_points, math.ceil(2 / eps) + 1), CAPACITY_GRID_MAX))
    ts = _target_grid(groups, points)
    step = 1.0 / (points - 1)
    best, cands = _capacity_pass(pop, groups, ts, count, complement, eps)
    # refine around the most valuable targets that beat the incumbent
    floor = -np.inf if best is None else best[0] + SLACK
    seeds = [t for val, t, _ in cands if val > floor][:REFINE_SEEDS]
    if seeds:
        fine = np.unique(np.concatenate([np.linspace(max(t - step, 0), min(t + step, 1), 41) for t in seeds]))
        alt, _ = _capacity_pass(pop, groups, fine, count, complement, eps)
        if alt is not None and (best is None or alt[0] > best[0]):
            best = alt
    if best is None:
        raise InfeasibleError("no target admits a split of the capacity across groups")
    _, d, t = best
    return _finish(pop, u, kind, d, cfg, {"method": "capacity", "target": float(t)})


def _capacity_pass(pop, groups, ts, count, complement, eps):
    """(best (value, d, t) or None, candidates ranked by value) over ``ts``."""
    cands = []
    for t in ts:
        alloc = _allocate(groups, t, count, complement)
        if alloc is not None:
            cands.append((alloc[0], t, alloc[1]))
    cands.sort(key=lambda c: -c[0])
    for val, t, sizes in cands:
        picks, ok = [], True
        for gr, s in zip(groups, sizes):
            j, mean = _closest_window(gr, s, t, eps / 2)
            if abs(mean - t) > eps / 2 + SLACK:
                ok = False
                break
            picks.append((5, j * (gr.n + 1) + s))
        if ok:
            return (val, _assemble(pop, groups, picks, complement), t), cands
    return None, cands


def _target_grid(groups, points):
    extra = []
    for gr in groups:
        extra += [gr.p.mean(), -gr.b / gr.slope]
    t = np.concatenate([np.linspace(0, 1, points), extra])
    return np.unique(t[(t >= 0) & (t <= 1)])


def _max_mean_size(gr: _Group, t: float, cap: int | None = None) -> int:
    """Largest n with t between the n-bottom mean and the n-top mean."""
    n = gr.n
    ks = np.arange(1, n + 1)
    top = np.cumsum(gr.p) / ks
    bot = np.cumsum(gr.p[::-1]) / ks
    ok = (top >= t - SLACK) & (bot <= t + SLACK)
    if not ok[0]:
        return 0
    m = int(np.argmin(ok)) if not ok.all() else n
    return m if cap is None else min(m, cap)


def _allocate(groups, t, count, complement):
    sizes_max = [_max_mean_size(gr, t) for gr in groups]
    if min(sizes_max) < 1 or sum(sizes_max) < count:
        return None
    coef = np.array([gr.slope * t + gr.b for gr in groups])
    if complement:
        coef = -coef
    sizes = [1] * len(groups)
    left = count - len(groups)
    for a in np.argsort(-coef, kind="stable"):
        add = min(left, sizes_max[a] - 1)
        sizes[a] += add
        left -= add
    if left:
        return None
    return float(np.dot(coef, sizes)), sizes


# Sufficiency ---------------------------------------------------------------

def solve_sufficiency(pop: ScoredPopulation, u: Utility, cfg: SolveConfig = SolveConfig()) -> SolveResult:
    """PPV parity and FOR parity jointly.

    For each PPV target t, a group selecting n members with mean t has
    FOR(n) = (N*BR - n*t) / (N - n). The group sizes are chosen by a window
    search over these FOR values; groups not at their largest admissible n
    get a non-threshold selection (sliding window)."""
    kind = ConstraintKind.SUFFICIENCY
    groups = _groups(pop, u)
    if len(groups) == 1:
        return _single_group(pop, u, kind, cfg, "expected")
    if _use_exact(groups, cfg):
        return _solve_exact(pop, u, kind, cfg, groups)
    if cfg.capacity is not None:
        raise ConfigError("capacity is not supported for sufficiency")
    eps = cfg.eps_parity
    brs = np.array([gr.p.mean() for gr in groups])
    cands = []
    if brs.max() - brs.min() <= eps:
        cands.append((0.0, None, "none"))
        cands.append((float(sum(gr.g.sum() for gr in groups)), None, "all"))
    prep = [_suff_prep(gr) for gr in groups]
    ts = _target_grid(groups, cfg.grid_points)
    scored = [c for c in (_suff_at(groups, prep, t, eps) for t in ts) if c is not None]
    if scored:
        t0 = max(scored, key=lambda c: c[0])[1]
        step = 1.0 / (cfg.grid_points - 1)
        fine = np.linspace(max(t0 - step, 0), min(t0 + step, 1), cfg.grid_points)
        scored += [c for c in (_suff_at(groups, prep, t, eps) for t in fine) if c is not None]
    cands += scored
    if not cands:
        raise InfeasibleError("PPV/FOR solution areas of the groups do not intersect")
    cands.sort(key=lambda c: -c[0])
    for val, t, sizes in cands[:50]:
        d = _suff_build(pop, groups, t, sizes, eps)
        if d is None:
            continue
        res = _finish(pop, u, kind, d, cfg, {"method": "fast"})
        if res.residual <= eps + 1e-9:
            res.info["ppv_target"] = None if t is None else float(t)
            res.info["deviating_groups"] = [str(g) for g, w in res.within_group.items() if not w.fair]
            return res
    raise InfeasibleError("no sufficiency candidate could be realised within eps")


def _suff_prep(gr: _Group):
    ks = np.arange(1, gr.n + 1)
    return ks, np.cumsum(gr.p) / ks, np.cumsum(gr.p[::-1]) / ks


def _suff_at(groups, prep, t, eps):
    opts = []
    for gr, (ks, top, bot) in zip(groups, prep):
        ok = (top >= t - SLACK) & (bot <= t + SLACK) & (ks < gr.n)
        if not ok[0]:
            return None
        m = int(np.argmin(ok)) if not ok.all() else gr.n - 1
        n = ks[:m]
        fo = (gr.p.sum() - n * t) / (gr.n - n)
        coef = gr.slope * t + gr.b
        opts.append(_Options(fo, n * coef, n, np.zeros(m, int), n))
    found = _window_search(opts, eps / 2)
    if found is None:
        return None
    return found[0], t, [int(o.param[i]) for o, i in zip(opts, found[1])]


def _suff_build(pop, groups, t, sizes, eps):
    if sizes == "none":
        return np.zeros(pop.n, dtype=np.int8)
    if sizes == "all":
        return np.ones(pop.n, dtype=np.int8)
    picks = []
    for gr, s in zip(groups, sizes):
        j, mean = _closest_window(gr, s, t, eps / 4)
        if abs(mean - t) > eps / 2:
            return None
        picks.append((5, j * (gr.n + 1) + s))
    return _assemble(pop, groups, picks)


# Dispatch ------------------------------------------------------------------

def solve(pop: ScoredPopulation, u: Utility, constraint, cfg: SolveConfig = SolveConfig()) -> SolveResult:
    kind = ConstraintKind(constraint)
    if kind == ConstraintKind.NONE:
        return solve_unconstrained(pop, u, cfg)
    if kind in RATE_KINDS:
        return solve_rate_parity(pop, u, kind, cfg)
    if kind == ConstraintKind.PPV_PARITY:
        return solve_ppv_parity(pop, u, cfg)
    if kind == ConstraintKind.FOR_PARITY:
        return solve_for_parity(pop, u, cfg)
    return solve_sufficiency(pop, u, cfg)
