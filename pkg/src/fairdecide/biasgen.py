"""Synthetic tabular data with controllable historical, measurement,
representation and omission bias.

Generative model (A group, R resource, Q count feature, S target construct)::

    A   ~ Bernoulli(p_A)
    R   = -beta_h_R * A + Gamma(k_R, theta_R)
    Q   ~ Binomial(K, sigmoid(-(alpha_RQ * R - beta_h_Q * A)))
    S   = alpha_R * R - alpha_Q * Q - beta_h_Y * A + N(0, sigma_S^2)
    P_S = S - beta_m_Y * A + N(0, sigma_PS^2)
    Y   = 1{S > mean(P_S)},  P_Y = 1{P_S > mean(P_S)}
    P_R = R - beta_m_R * A + N(0, sigma_PR^2)
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .core import ConfigError, fmt


class DegenerateSampleError(ValueError):
    pass


@dataclass(frozen=True)
class BiasConfig:
    n: int = 100_000
    seed: int = 0
    p_A: float = 0.5
    k_R: float = 2
    theta_R: float = 3.0
    K: int = 3
    alpha_RQ: float = 0.0
    alpha_R: float = 1.0
    alpha_Q: float = 2.0
    sigma_S: float = 2.0
    sigma_PS: float = 2.0
    sigma_PR: float = 2.0
    beta_h_R: float = 0.0
    beta_h_Q: float = 0.0
    beta_h_Y: float = 0.0
    beta_m_R: float = 0.0
    beta_m_Y: float = 0.0
    measurement_R_active: bool = False
    measurement_Y_active: bool = False
    nonlinear_m_Y: bool = False
    p_u: float = 1.0
    undersample_conditioned_on_R: bool = False
    omit_R: bool = False

    def __post_init__(self):
        if self.n < 2:
            raise ConfigError("n must be at least 2")
        if not 0 < self.p_A < 1:
            raise ConfigError("p_A must lie in (0, 1)")
        if self.k_R <= 0 or self.theta_R <= 0:
            raise ConfigError("Gamma shape and scale must be positive")
        if float(self.k_R) != int(self.k_R):
            raise ConfigError("k_R must be an integer (Gamma drawn as a sum of exponentials)")
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        if min(self.sigma_S, self.sigma_PS, self.sigma_PR) < 0:
            raise ConfigError("noise scales must be non-negative")
        if min(self.beta_h_R, self.beta_h_Q, self.beta_h_Y, self.beta_m_R, self.beta_m_Y) < 0:
            raise ConfigError("bias strengths must be non-negative")
        if not 0 < self.p_u <= 1:
            raise ConfigError("p_u must lie in (0, 1]")
        if self.nonlinear_m_Y and not self.measurement_Y_active:
            raise ConfigError("nonlinear_m_Y requires measurement_Y_active")

    @classmethod
    def from_dict(cls, d: dict) -> "BiasConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "BiasConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature view (A, R or P_R, Q, label) plus hidden ground truth.

    ``label`` is P_Y when measurement bias on Y is active, else Y.
    ``R`` is the observed resource: P_R under measurement bias on R."""

    A: np.ndarray
    R: np.ndarray
    Q: np.ndarray
    label: np.ndarray
    S: np.ndarray
    P_S: np.ndarray
    P_R: np.ndarray
    Y_true: np.ndarray
    R_true: np.ndarray
    ids: np.ndarray
    omit_R: bool = False

    @property
    def n(self) -> int:
        return self.A.size

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        kw = {f.name: getattr(self, f.name)[idx] for f in fields(self) if f.name != "omit_R"}
        return Dataset(**kw, omit_R=self.omit_R)

    def features(self, with_A: bool = True) -> np.ndarray:
        """Design matrix of the feature view."""
        cols = ([self.A] if with_A else []) + ([] if self.omit_R else [self.R]) + [self.Q]
        return np.column_stack([c.astype(float) for c in cols])

    def feature_names(self, with_A: bool = True) -> list:
        return (["A"] if with_A else []) + ([] if self.omit_R else ["R"]) + ["Q"]

    def write_csv(self, path, hidden_path=None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            cols = ["id", "A"] + ([] if self.omit_R else ["R"]) + ["Q", "label"]
            w.writerow(cols)
            for i in range(self.n):
                row = [int(self.ids[i]), int(self.A[i])]
                if not self.omit_R:
                    row.append(fmt(self.R[i]))
                row += [int(self.Q[i]), int(self.label[i])]
                w.writerow(row)
        if hidden_path is not None:
            with open(hidden_path, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(["id", "S", "P_S", "P_R", "Y_true"])
                for i in range(self.n):
                    w.writerow([int(self.ids[i]), fmt(self.S[i]), fmt(self.P_S[i]),
                                fmt(self.P_R[i]), int(self.Y_true[i])])


def read_feature_csv(path) -> dict:
    """Feature-view CSV as a dict of arrays (R absent when omitted)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ConfigError(f"{path}: no rows")
    out = {"id": np.array([int(r["id"]) for r in rows]),
           "A": np.array([int(r["A"]) for r in rows]),
           "Q": np.array([int(r["Q"]) for r in rows]),
           "label": np.array([int(r["label"]) for r in rows])}
    if "R" in rows[0]:
        out["R"] = np.array([float(r["R"]) for r in rows])
    return out


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def generate(cfg: BiasConfig) -> Dataset:
    """Draw a dataset; undersampling and omission from ``cfg`` are applied last."""
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n
    A = (rng.random(n) < cfg.p_A).astype(np.int8)
    gamma = rng.exponential(cfg.theta_R, size=(n, int(cfg.k_R))).sum(1)
    R = -cfg.beta_h_R * A + gamma
    Q = rng.binomial(cfg.K, _sigmoid(-(cfg.alpha_RQ * R - cfg.beta_h_Q * A)))
    S = cfg.alpha_R * R - cfg.alpha_Q * Q - cfg.beta_h_Y * A + rng.normal(0, cfg.sigma_S, n)
    noise_ps = rng.normal(0, cfg.sigma_PS, n)
    noise_pr = rng.normal(0, cfg.sigma_PR, n)
    if cfg.measurement_Y_active:
        if cfg.nonlinear_m_Y:
            # penalize A=1 below the median resource, favor it above
            sign = np.where(R < np.median(R), 1.0, -1.0)
            P_S = S - cfg.beta_m_Y * A * sign + noise_ps
        else:
            P_S = S - cfg.beta_m_Y * A + noise_ps
    else:
        P_S = S + noise_ps
    cut = P_S.mean()
    Y = (S > cut).astype(np.int8)
    P_Y = (P_S > cut).astype(np.int8)
    P_R = R - cfg.beta_m_R * A + noise_pr
    data = Dataset(
        A=A,
        R=P_R if cfg.measurement_R_active else R,
        Q=Q.astype(np.int16),
        label=P_Y if cfg.measurement_Y_active else Y,
        S=S,
        P_S=P_S,
        P_R=P_R,
        Y_true=Y,
        R_true=R,
        ids=np.arange(n),
    )
    if cfg.p_u < 1:
        data = undersample(data, cfg.p_u, cfg.undersample_conditioned_on_R, cfg.seed + 1)
    if cfg.omit_R:
        data = omit_feature(data)
    return data


def undersample(data: Dataset, p_u: float, conditioned_on_R: bool = False, seed: int = 0) -> Dataset:
    """Keep all A=0 rows and ceil(p_u * n_{A=1}) of the A=1 rows."""
    if not 0 < p_u <= 1:
        raise ConfigError("p_u must lie in (0, 1]")
    ones = np.flatnonzero(data.A == 1)
    keep_n = math.ceil(p_u * ones.size)
    if keep_n == 0:
        raise DegenerateSampleError("undersampling leaves no A=1 rows")
    if conditioned_on_R:
        kept = ones[np.argsort(data.R_true[ones], kind="stable")[:keep_n]]
    else:
        kept = np.random.default_rng(seed).choice(ones, size=keep_n, replace=False)
    idx = np.sort(np.concatenate([np.flatnonzero(data.A == 0), kept]))
    return data.take(idx)


def omit_feature(data: Dataset) -> Dataset:
    """Drop R from the feature view; hidden columns keep it."""
    return replace(data, omit_R=True)


def train_test_split(data: Dataset, train_frac: float = 2 / 3, seed: int = 0):
    idx = np.random.default_rng(seed).permutation(data.n)
    cut = int(round(train_frac * data.n))
    return data.take(np.sort(idx[:cut])), data.take(np.sort(idx[cut:]))


# Downstream classifier experiment ------------------------------------------

MITIGATIONS = ("none", "blind", "sp")


@dataclass
class BiasExperiment:
    """Test-split decisions audited against the observed and the true label."""

    decisions: np.ndarray
    scores: np.ndarray
    observed: "object"
    truth: "object"
    mitigation: str


def _standardize(X_train, X_test):
    mu, sd = X_train.mean(0), X_train.std(0)
    sd[sd == 0] = 1.0
    return (X_train - mu) / sd, (X_test - mu) / sd


def run_classifier(data: Dataset, mitigation: str = "none", seed: int = 0,
                   eps: float = 0.005) -> BiasExperiment:
    """Train a logistic classifier on 2/3 of ``data`` and decide on the rest.

    ``blind`` drops A from the features; ``sp`` post-processes the scores to
    equal acceptance rates while maximizing expected accuracy."""
    from .core import ScoredPopulation, UtilityParams
    from .logistic import fit_logistic
    from .metrics import fairness_report
    from .optimizer import ConstraintKind, SolveConfig, solve

    if mitigation not in MITIGATIONS:
        raise ConfigError(f"mitigation must be one of {MITIGATIONS}")
    train, test = train_test_split(data, seed=seed)
    with_A = mitigation != "blind"
    Xtr, Xte = _standardize(train.features(with_A), test.features(with_A))
    model = fit_logistic(Xtr, train.label)
    s = model.predict_proba(Xte)
    if mitigation == "sp":
        pop = ScoredPopulation(s, test.A, groups=(0, 1))
        res = solve(pop, UtilityParams(1.0, -1.0), ConstraintKind.STATISTICAL_PARITY,
                    SolveConfig(eps_parity=eps, labels="expected"))
        d = res.decisions
    else:
        d = (s >= 0.5).astype(np.int8)
    return BiasExperiment(
        d, s,
        fairness_report(d, test.label, test.A, (0, 1)),
        fairness_report(d, test.Y_true, test.A, (0, 1)),
        mitigation,
    )
