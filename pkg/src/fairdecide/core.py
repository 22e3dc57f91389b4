"""Shared domain types: populations, decision rules, utilities."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Any, Iterator, Mapping, NamedTuple, Sequence, Union

import numpy as np


class ConfigError(ValueError):
    """Invalid configuration or rule/population mismatch."""


class ShapeError(ValueError):
    """Misaligned array lengths."""


class Individual(NamedTuple):
    id: int
    p: float
    group: Any
    y: int | None = None


@dataclass(frozen=True, eq=False)
class ScoredPopulation:
    """Individuals with a score p in [0, 1], a group id and an optional label.

    Arrays are stored column-wise. ``groups`` is the declared group order;
    signed differences elsewhere are always ``groups[0] - groups[1]``.
    """

    p: np.ndarray
    group: np.ndarray
    y: np.ndarray | None = None
    ids: np.ndarray | None = None
    groups: tuple = ()

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float).ravel()
        group = np.asarray(self.group).ravel()
        if p.size == 0:
            raise ConfigError("population is empty")
        if group.shape != p.shape:
            raise ShapeError("p and group lengths differ")
        if not np.all(np.isfinite(p)) or p.min() < 0 or p.max() > 1:
            raise ConfigError("scores must lie in [0, 1]")
        ids = np.arange(p.size) if self.ids is None else np.asarray(self.ids).ravel()
        if ids.shape != p.shape:
            raise ShapeError("ids and p lengths differ")
        if np.unique(ids).size != ids.size:
            raise ConfigError("ids must be unique")
        y = self.y
        if y is not None:
            y = np.asarray(y).ravel()
            if y.shape != p.shape:
                raise ShapeError("y and p lengths differ")
            if not np.all((y == 0) | (y == 1)):
                raise ConfigError("labels must be 0 or 1")
            y = y.astype(np.int8)
        groups = tuple(self.groups) if len(self.groups) else tuple(_ordered_unique(group))
        known = set(groups)
        if any(g not in known for g in _ordered_unique(group)):
            raise ConfigError("individual group not in declared group set")
        codes = np.empty(p.size, dtype=np.intp)
        for k, g in enumerate(groups):
            codes[group == g] = k
        if np.any(np.bincount(codes, minlength=len(groups)) == 0):
            raise ConfigError("every declared group needs at least one member")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "group", group)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "_codes", codes)

    @classmethod
    def from_individuals(cls, people: Sequence[Individual], groups: Sequence = ()):
        has_y = [q.y is not None for q in people]
        if any(has_y) and not all(has_y):
            raise ConfigError("labels must be given for all individuals or none")
        return cls(
            p=[q.p for q in people],
            group=[q.group for q in people],
            y=[q.y for q in people] if people and all(has_y) else None,
            ids=[q.id for q in people],
            groups=tuple(groups),
        )

    @property
    def codes(self) -> np.ndarray:
        """Group index of each individual into ``groups``."""
        return self._codes

    @property
    def n(self) -> int:
        return self.p.size

    def __len__(self) -> int:
        return self.p.size

    def __iter__(self) -> Iterator[Individual]:
        for k in range(self.n):
            yk = None if self.y is None else int(self.y[k])
            yield Individual(int(self.ids[k]), float(self.p[k]), self.group[k], yk)

    def mask(self, g) -> np.ndarray:
        if g not in self.groups:
            raise ConfigError(f"unknown group {g!r}")
        return self.codes == self.groups.index(g)

    def counts(self) -> dict:
        c = np.bincount(self.codes, minlength=len(self.groups))
        return {g: int(c[k]) for k, g in enumerate(self.groups)}

    def base_rates(self) -> dict:
        """Mean score per group."""
        return {g: float(self.p[self.codes == k].mean()) for k, g in enumerate(self.groups)}

    def with_labels(self, y) -> "ScoredPopulation":
        return ScoredPopulation(self.p, self.group, y, self.ids, self.groups)


def _ordered_unique(a) -> list:
    seen = {}
    for v in a.tolist():
        seen.setdefault(v, None)
    return list(seen)


@dataclass(frozen=True)
class UtilityParams:
    """Decision-maker gain of selecting an individual: p*(alpha-beta) + beta."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and np.isfinite(self.beta)):
            raise ConfigError("utility parameters must be finite")
        if not self.alpha > self.beta:
            raise ConfigError("utility requires alpha > beta")

    @classmethod
    def from_weights(cls, w11: float, w10: float, w01: float, w00: float) -> "UtilityParams":
        """Selection gain relative to rejection under payoffs w_dy."""
        return cls(w11 - w01, w10 - w00)

    @property
    def threshold(self) -> float:
        return -self.beta / (self.alpha - self.beta)

    def gain(self, p):
        return np.asarray(p, dtype=float) * (self.alpha - self.beta) + self.beta


Utility = Union[UtilityParams, Mapping[Any, UtilityParams]]


def gains(pop: ScoredPopulation, u: Utility) -> np.ndarray:
    """Per-individual selection gain, allowing one UtilityParams per group."""
    if isinstance(u, UtilityParams):
        return u.gain(pop.p)
    out = np.empty(pop.n)
    for k, g in enumerate(pop.groups):
        if g not in u:
            raise ConfigError(f"no utility parameters for group {g!r}")
        m = pop.codes == k
        out[m] = u[g].gain(pop.p[m])
    return out


def group_utility(u: Utility, g) -> UtilityParams:
    return u if isinstance(u, UtilityParams) else u[g]


@dataclass(frozen=True)
class UtilityMatrix:
    """Decision-subject payoffs w_dy, optionally overridden per group."""

    w00: float
    w01: float
    w10: float
    w11: float
    overrides: Mapping[Any, "UtilityMatrix"] | None = None

    def __post_init__(self):
        if not all(np.isfinite([self.w00, self.w01, self.w10, self.w11])):
            raise ConfigError("utility weights must be finite")

    def for_group(self, g) -> "UtilityMatrix":
        if self.overrides and g in self.overrides:
            return self.overrides[g]
        return self

    def uses_label(self) -> bool:
        mats = [self, *(self.overrides or {}).values()]
        return any(m.w11 != m.w10 or m.w01 != m.w00 for m in mats)


# Decision rules ------------------------------------------------------------

@dataclass(frozen=True)
class UniformThreshold:
    tau: float


@dataclass(frozen=True)
class GroupInterval:
    """Select p in the inclusive interval [lo, hi] of the individual's group."""

    intervals: Mapping[Any, tuple]

    def __post_init__(self):
        for g, (lo, hi) in self.intervals.items():
            if not 0 <= lo <= hi <= 1:
                raise ConfigError(f"bad interval for group {g!r}: [{lo}, {hi}]")

    @classmethod
    def lower(cls, taus: Mapping) -> "GroupInterval":
        return cls({g: (t, 1.0) for g, t in taus.items()})

    @classmethod
    def upper(cls, taus: Mapping) -> "GroupInterval":
        return cls({g: (0.0, t) for g, t in taus.items()})


@dataclass(frozen=True)
class RandomizedBoundary:
    """Interval rule whose members with a score in ``boundary[g]`` are
    selected with probability ``q[g]`` instead of deterministically."""

    intervals: Mapping[Any, tuple]
    q: Mapping[Any, float]
    boundary: Mapping[Any, frozenset] = field(default_factory=dict)

    def __post_init__(self):
        GroupInterval(self.intervals)
        for g, qg in self.q.items():
            if not 0 <= qg <= 1:
                raise ConfigError(f"boundary probability out of range for {g!r}")


@dataclass(frozen=True, eq=False)
class ExplicitVector:
    decisions: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.decisions).ravel()
        if not np.all((d == 0) | (d == 1)):
            raise ConfigError("decisions must be 0 or 1")
        object.__setattr__(self, "decisions", d.astype(np.int8))


DecisionRule = Union[UniformThreshold, GroupInterval, RandomizedBoundary, ExplicitVector]


def _interval_mask(intervals, pop: ScoredPopulation) -> np.ndarray:
    unknown = set(intervals) - set(pop.groups)
    if unknown:
        raise ConfigError(f"rule references unknown groups {sorted(map(str, unknown))}")
    missing = set(pop.groups) - set(intervals)
    if missing:
        raise ConfigError(f"rule has no interval for groups {sorted(map(str, missing))}")
    sel = np.zeros(pop.n, dtype=bool)
    for k, g in enumerate(pop.groups):
        lo, hi = intervals[g]
        m = pop.codes == k
        sel[m] = (pop.p[m] >= lo) & (pop.p[m] <= hi)
    return sel


def apply_rule(rule: DecisionRule, pop: ScoredPopulation, seed: int = 0) -> np.ndarray:
    """Decision vector (int8 array of 0/1) aligned with ``pop``."""
    if isinstance(rule, UniformThreshold):
        return (pop.p >= rule.tau).astype(np.int8)
    if isinstance(rule, GroupInterval):
        return _interval_mask(rule.intervals, pop).astype(np.int8)
    if isinstance(rule, RandomizedBoundary):
        d = _interval_mask(rule.intervals, pop)
        rng = np.random.default_rng(seed)
        for k, g in enumerate(pop.groups):
            edge = rule.boundary.get(g, frozenset())
            if not edge:
                continue
            m = (pop.codes == k) & np.isin(pop.p, list(edge))
            idx = np.flatnonzero(m)
            d[idx] = rng.random(idx.size) < rule.q.get(g, 0.0)
        return d.astype(np.int8)
    if isinstance(rule, ExplicitVector):
        if rule.decisions.size != pop.n:
            raise ShapeError("decision vector length differs from population")
        return rule.decisions.copy()
    raise ConfigError(f"unsupported rule type {type(rule).__name__}")


def _check_len(pop: ScoredPopulation, d) -> np.ndarray:
    d = np.asarray(d).ravel()
    if d.size != pop.n:
        raise ShapeError(f"decision vector has {d.size} entries, population {pop.n}")
    return d


def expected_utility(pop: ScoredPopulation, d, u: Utility) -> float:
    d = _check_len(pop, d)
    return float(np.dot(gains(pop, u), d))


class WithinGroupFairness(NamedTuple):
    fair: bool
    violations: int


def within_group_fairness(pop: ScoredPopulation, d, group) -> WithinGroupFairness:
    """Count pairs (selected i, rejected j) of ``group`` with p_i < p_j."""
    d = _check_len(pop, d)
    m = pop.mask(group)
    chosen = pop.p[m & (d == 1)]
    rejected = np.sort(pop.p[m & (d == 0)])
    if chosen.size == 0 or rejected.size == 0:
        return WithinGroupFairness(True, 0)
    above = rejected.size - np.searchsorted(rejected, chosen, side="right")
    v = int(above.sum())
    return WithinGroupFairness(v == 0, v)


# Population CSV ------------------------------------------------------------

def fmt(x: float) -> str:
    return f"{x:.6g}"


def write_population_csv(pop: ScoredPopulation, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "group", "p"] + (["y"] if pop.y is not None else []))
        for q in pop:
            row = [q.id, q.group, fmt(q.p)]
            if q.y is not None:
                row.append(q.y)
            w.writerow(row)


def read_population_csv(path, groups: Sequence = ()) -> ScoredPopulation:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ConfigError(f"{path}: no rows")
    need = {"id", "group", "p"}
    if not need <= set(rows[0]):
        raise ConfigError(f"{path}: header must contain id,group,p")
    has_y = "y" in rows[0]
    group = [_maybe_int(r["group"]) for r in rows]
    return ScoredPopulation(
        p=[float(r["p"]) for r in rows],
        group=group,
        y=[int(r["y"]) for r in rows] if has_y else None,
        ids=[int(r["id"]) for r in rows],
        groups=tuple(groups),
    )


def _maybe_int(s: str):
    try:
        return int(s)
    except ValueError:
        return s


def derive_seed(master: int, stream: str, index: int = 0) -> int:
    """64-bit seed: first 8 bytes (big-endian) of SHA-256 over
    ``f"{master}:{stream}:{index}"``."""
    import hashlib

    digest = hashlib.sha256(f"{int(master)}:{stream}:{int(index)}".encode()).digest()
    return int.from_bytes(digest[:8], "big")
