"""Ad-delivery simulation: power-law click probabilities, group-specific
opportunity costs, the cost of fairness and leveling-down detection.

A platform earns ``alpha * p`` when showing the ad to a user with click
probability ``p`` and ``beta_a`` otherwise. Relative to not showing, the gain
of showing is ``alpha * p - beta_a``, so per group the optimizer sees
``UtilityParams(alpha - beta_a, -beta_a)`` and the unconstrained threshold is
``beta_a / alpha``.
"""
from __future__ import annotations

import csv
import math
import os
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .core import ConfigError, ScoredPopulation, UtilityParams, derive_seed
from .metrics import fairness_report
from .optimizer import ConstraintKind, InfeasibleError, SolveConfig, solve

GROUPS = ("m", "w")
CONSTRAINTS = ("sp", "tpr", "fpr", "ppv", "for")
GAP_METRICS = ("acceptance_rate", "tpr", "fpr", "ppv", "for")
MAX_EPS = 0.05


def sample_clicks(k: float, n: int, seed) -> np.ndarray:
    """Power-law draws with density k x^(k-1) via inverse CDF x = U^(1/k)."""
    if not k > 0:
        raise ConfigError("power-law shape k must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return rng.random(n) ** (1.0 / k)


def ad_utilities(alpha: float, betas: dict) -> dict:
    if not alpha > 0 or any(not b > 0 for b in betas.values()):
        raise ConfigError("alpha and every beta must be positive")
    return {g: UtilityParams(alpha - b, -b) for g, b in betas.items()}


def optimal_ad_rule(p, group, alpha: float, betas: dict) -> np.ndarray:
    """Show the ad iff p > beta_a / alpha."""
    p = np.asarray(p, dtype=float)
    group = np.asarray(group)
    ad_utilities(alpha, betas)
    tau = np.array([betas[g] / alpha for g in group.tolist()])
    return (p > tau).astype(np.int8)


def platform_utility(p, group, d, alpha: float, betas: dict) -> float:
    beta = np.array([betas[g] for g in np.asarray(group).tolist()])
    d = np.asarray(d, dtype=float)
    return float(np.sum(d * alpha * np.asarray(p) + (1 - d) * beta))


@dataclass(frozen=True)
class AdScenarioConfig:
    k: dict = field(default_factory=lambda: {"m": 0.05, "w": 0.05})
    beta: dict = field(default_factory=lambda: {"m": 0.03, "w": 0.03})
    alpha: float = 0.2
    n: int = 1000
    repeats: int = 30
    constraints: tuple = CONSTRAINTS
    impression_fixed: bool = False
    seed: int = 0
    eps: float | None = None

    def __post_init__(self):
        if set(self.k) != set(GROUPS) or set(self.beta) != set(GROUPS):
            raise ConfigError(f"k and beta need entries for groups {GROUPS}")
        ad_utilities(self.alpha, self.beta)
        for v in self.k.values():
            if not v > 0:
                raise ConfigError("power-law shape k must be positive")
        if self.n < 1 or self.repeats < 1:
            raise ConfigError("n and repeats must be positive")
        for c in self.constraints:
            if c not in CONSTRAINTS:
                raise ConfigError(f"unsupported ad constraint {c!r}")

    def base_eps(self, kind: str) -> float:
        """Starting tolerance: below one person for statistical parity,
        0.001 otherwise (doubled on infeasibility up to 0.05)."""
        if self.eps is not None:
            return self.eps
        if kind == "sp":
            return (1.0 if self.impression_fixed else 0.5) / self.n
        return 1e-3


# Table-1 grid: (swept parameter, values, base config)
SWEEPS = {
    "A": ("alpha", np.linspace(0.03, 1, 10), {}),
    "B": ("beta_w", np.linspace(0.03, 1, 10), {"alpha": 0.2}),
    "C": ("k_w", np.linspace(0.05, 0.005, 10), {"alpha": 1.0}),
    "D": ("beta_w", np.linspace(0.03, 1, 10), {"alpha": 0.2, "k": {"m": 0.05, "w": 0.01}}),
}


def preset(name: str, value: float, **overrides) -> AdScenarioConfig:
    """Scenario A-D at one point of its sweep."""
    if name not in SWEEPS:
        raise ConfigError(f"unknown scenario {name!r}; choose from {sorted(SWEEPS)}")
    param, _, base = SWEEPS[name]
    kw = {"k": {"m": 0.05, "w": 0.05}, "beta": {"m": 0.03, "w": 0.03}, "alpha": 0.2}
    kw.update(base)
    kw["k"] = dict(kw["k"])
    kw["beta"] = dict(kw["beta"])
    if param == "alpha":
        kw["alpha"] = float(value)
    elif param == "beta_w":
        kw["beta"]["w"] = float(value)
    else:
        kw["k"]["w"] = float(value)
    kw.update(overrides)
    return AdScenarioConfig(**kw)


@dataclass
class RepeatOutcome:
    utility: float
    cost_pct: float
    shown: dict
    gaps: dict
    eps: float | None


@dataclass
class ScenarioResult:
    """Per-constraint outcomes, one entry per repeat; ``none`` is unconstrained.

    A repeat where no tolerance up to 0.05 was feasible is stored as None."""

    config: AdScenarioConfig
    runs: dict

    def values(self, constraint: str, metric: str, group=None) -> np.ndarray:
        out = []
        for r in self.runs[constraint]:
            if r is None:
                out.append(np.nan)
            elif metric == "cost_pct":
                out.append(r.cost_pct)
            elif metric == "utility":
                out.append(r.utility)
            elif metric == "shown":
                out.append(r.shown[group])
            elif metric == "delta_v":
                base = self.runs["none"][len(out)]
                out.append(r.shown[group] - base.shown[group])
            else:
                v = r.gaps[metric]
                out.append(np.nan if v is None else v)
        return np.array(out, dtype=float)

    def summary(self, constraint: str, metric: str, group=None, seed: int = 0) -> tuple:
        """(mean, ci_lo, ci_hi) over repeats with a 95% bootstrap interval."""
        return bootstrap_ci(self.values(constraint, metric, group), seed)


def bootstrap_ci(x, seed: int = 0, n_resamples: int = 2000) -> tuple:
    x = np.asarray(x, dtype=float)
    x = x[np.isfinite(x)]
    if x.size == 0:
        return (math.nan, math.nan, math.nan)
    m = float(x.mean())
    if x.size == 1 or np.all(x == x[0]):
        return (m, m, m)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = stats.bootstrap((x,), np.mean, confidence_level=0.95, method="percentile",
                              n_resamples=n_resamples, random_state=np.random.default_rng(seed))
    return (m, float(res.confidence_interval.low), float(res.confidence_interval.high))


def _outcome(p, grp, y, d, cfg, u_star, eps):
    u = platform_utility(p, grp, d, cfg.alpha, cfg.beta)
    rep = fairness_report(d, y, grp, GROUPS)
    gaps = {m: rep.differences[m] for m in GAP_METRICS}
    shown = {g: int(d[grp == g].sum()) for g in GROUPS}
    cost = 100.0 if u_star is None else 100.0 * u / u_star
    return RepeatOutcome(u, cost, shown, gaps, eps)


def _solve_relaxed(pop, utils, kind, cfg, capacity):
    eps = cfg.base_eps(kind)
    while eps <= MAX_EPS:
        try:
            sc = SolveConfig(eps_parity=eps, capacity=capacity, labels="expected")
            return solve(pop, utils, ConstraintKind(kind), sc), eps
        except InfeasibleError:
            eps *= 2
    return None, None


def run_repeat(cfg: AdScenarioConfig, r: int) -> dict:
    rng = np.random.default_rng(derive_seed(cfg.seed, "adsim", r))
    p = np.concatenate([sample_clicks(cfg.k[g], cfg.n, rng) for g in GROUPS])
    grp = np.repeat(np.array(GROUPS), cfg.n)
    y = (rng.random(p.size) < p).astype(np.int8)
    pop = ScoredPopulation(p, grp, groups=GROUPS)
    utils = ad_utilities(cfg.alpha, cfg.beta)
    d_star = optimal_ad_rule(p, grp, cfg.alpha, cfg.beta)
    base = _outcome(p, grp, y, d_star, cfg, None, None)
    out = {"none": base}
    capacity = int(d_star.sum()) if cfg.impression_fixed else None
    for kind in cfg.constraints:
        res, eps = _solve_relaxed(pop, utils, kind, cfg, capacity)
        out[kind] = None if res is None else _outcome(p, grp, y, res.decisions, cfg, base.utility, eps)
    return out


def run_scenario(cfg: AdScenarioConfig) -> ScenarioResult:
    runs = {c: [] for c in ("none",) + tuple(cfg.constraints)}
    for r in range(cfg.repeats):
        for c, o in run_repeat(cfg, r).items():
            runs[c].append(o)
    return ScenarioResult(cfg, runs)


@dataclass
class LevelingDown:
    delta_v: dict  # group -> (mean, ci_lo, ci_hi) of V(d_c) - V(d*)
    per_repeat: dict  # group -> array of deltas
    flag: bool
    repeats_flagged: int


def leveling_down_report(result: ScenarioResult, constraint: str, seed: int = 0) -> LevelingDown:
    """Leveling down: no group gains on average and some group loses.

    A group loses when its 95% interval for the change in users shown lies
    below zero; it gains when its mean change is positive."""
    if constraint not in result.runs or constraint == "none":
        raise ConfigError(f"no constrained runs for {constraint!r}")
    per = {g: result.values(constraint, "delta_v", g) for g in GROUPS}
    ci = {g: bootstrap_ci(per[g], seed) for g in GROUPS}
    harmed = any(c[2] < 0 for c in ci.values())
    helped = any(c[0] > 0 for c in ci.values())
    stacked = np.column_stack([per[g] for g in GROUPS])
    ok = np.all(np.isfinite(stacked), axis=1)
    rep = np.all(stacked[ok] <= 0, axis=1) & np.any(stacked[ok] < 0, axis=1)
    return LevelingDown(ci, per, harmed and not helped, int(rep.sum()))


# Sweeps and CSV output ------------------------------------------------------

def sweep(name: str, values=None, **overrides) -> list:
    """[(value, ScenarioResult)] over a preset's grid (or custom values)."""
    grid = SWEEPS[name][1] if values is None else values
    return [(float(v), run_scenario(preset(name, v, **overrides))) for v in grid]


def write_sweep_csvs(results: list, out_dir) -> list:
    """One CSV per metric family, columns sweep_value,constraint,mean,ci_lo,ci_hi."""
    os.makedirs(out_dir, exist_ok=True)
    families = {"cost_pct": ("cost_pct", None)}
    families.update({f"gap_{m}": (m, None) for m in GAP_METRICS})
    families.update({f"shown_{g}": ("shown", g) for g in GROUPS})
    families.update({f"delta_v_{g}": ("delta_v", g) for g in GROUPS})
    paths = []
    for fam, (metric, g) in families.items():
        path = os.path.join(out_dir, f"{fam}.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["sweep_value", "constraint", "mean", "ci_lo", "ci_hi"])
            for v, res in results:
                for c in res.runs:
                    if metric == "delta_v" and c == "none":
                        continue
                    m, lo, hi = res.summary(c, metric, g)
                    w.writerow([f"{v:.6g}", c] + [f"{x:.6g}" for x in (m, lo, hi)])
        paths.append(path)
    return paths


def with_impressions(cfg: AdScenarioConfig) -> AdScenarioConfig:
    return replace(cfg, impression_fixed=True)
