"""Feedback loops in a one-item recommender.

Each user has a true interest ``theta`` and an observed feature ``x`` in
[0, 1]. A logistic model predicts ``yhat = f(x)``; the item is recommended
(``d = 1``) iff ``yhat > 0.5``. One loop type closes the pipeline:

* sampling: a user with ``d = 0`` leaves and is replaced by a newcomer from
  G1 with probability equal to G1's current share
* individual: ``theta <- (1 - mix) * theta + mix * d``
* feature: ``x`` becomes the user's running click ratio
* mlmodel: ``(x, y)`` enters the training buffer only when ``d = 1``
* outcome: the click probability moves by ``+-shift`` with the decision
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .core import ConfigError
from .logistic import LogisticModel, fit_logistic

LOOPS = ("sampling", "individual", "feature", "mlmodel", "outcome")
GROUPS = ("G1", "G2")


@dataclass(frozen=True)
class LoopConfig:
    loop_type: str = "sampling"
    mu_theta: tuple = (0.7, 0.3)
    sigma_theta: tuple = (0.15, 0.15)
    mu_r: tuple = (0.0, 0.0)
    sigma_r: tuple = (0.0, 0.0)
    sigma_t: tuple = (0.1, 0.1)
    mu_t_train: float = 0.0
    sigma_t_train: float = 0.0
    n: int = 1000
    n_train: int = 500
    steps: int = 10_000
    retrain_every: int = 50
    mix: float = 0.01
    shift: float = 0.2
    record_every: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.loop_type not in LOOPS:
            raise ConfigError(f"loop_type must be one of {LOOPS}")
        if self.n < 2 or self.n_train < 1 or self.steps < 0:
            raise ConfigError("n >= 2, n_train >= 1 and steps >= 0 required")
        if self.retrain_every < 1 or self.record_every < 1:
            raise ConfigError("retrain_every and record_every must be >= 1")
        if not 0 <= self.mix <= 1:
            raise ConfigError("mix must lie in [0, 1]")
        for name in ("mu_theta", "sigma_theta", "mu_r", "sigma_r", "sigma_t"):
            if len(getattr(self, name)) != 2:
                raise ConfigError(f"{name} needs one value per group")
        if min(self.sigma_theta + self.sigma_r + self.sigma_t) < 0 or self.sigma_t_train < 0:
            raise ConfigError("standard deviations must be non-negative")

    @classmethod
    def preset(cls, loop_type: str, **overrides) -> "LoopConfig":
        """Initial conditions of the reference experiments for one loop type."""
        kw: dict = {"loop_type": loop_type}
        if loop_type == "feature":
            kw.update(mu_theta=(0.5, 0.5), mu_r=(0.0, -0.2), sigma_r=(0.1, 0.1))
        elif loop_type == "mlmodel":
            kw.update(sigma_t_train=1.0)
        elif loop_type not in LOOPS:
            raise ConfigError(f"loop_type must be one of {LOOPS}")
        kw.update(overrides)
        return cls(**kw)


@dataclass
class SimResult:
    config: LoopConfig
    rows: list = field(default_factory=list)  # (step, metric, group, value)

    def series(self, metric: str, group: str) -> tuple:
        pts = [(s, v) for s, m, g, v in self.rows if m == metric and g == group]
        return np.array([s for s, _ in pts]), np.array([v for _, v in pts])

    def final(self, metric: str, group: str) -> float:
        return float(self.series(metric, group)[1][-1])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "metric", "group", "value"])
            for s, m, g, v in self.rows:
                w.writerow([s, m, g, f"{v:.6g}"])


class Pipeline:
    """Mutable simulation state; ``step()`` advances one recommendation."""

    def __init__(self, cfg: LoopConfig):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        n = cfg.n
        self.group = (self.rng.random(n) >= 0.5).astype(np.int8)  # 0 = G1, 1 = G2
        self.theta = self._draw_theta(self.group)
        self.offset = self._draw_offset(self.group)
        self.x = np.clip(self.theta + self.offset, 0, 1)
        self.visits = np.zeros(n, dtype=np.int64)
        self.clicks = np.zeros(n, dtype=np.int64)
        self.x0 = self.x.copy()
        cap = 2 * cfg.n_train + cfg.steps
        self.X = np.empty(cap)
        self.Y = np.empty(cap)
        self.size = 0
        self._init_buffer()
        self.model = fit_logistic(self.X[: self.size], self.Y[: self.size])
        self.t = 0

    def _draw_theta(self, grp):
        mu = np.asarray(self.cfg.mu_theta)[grp]
        sd = np.asarray(self.cfg.sigma_theta)[grp]
        return np.clip(self.rng.normal(mu, sd), 0, 1)

    def _draw_offset(self, grp):
        return self.rng.normal(np.asarray(self.cfg.mu_r)[grp], np.asarray(self.cfg.sigma_r)[grp])

    def _init_buffer(self):
        cfg = self.cfg
        grp = np.repeat(np.array([0, 1], dtype=np.int8), cfg.n_train)
        theta = self._draw_theta(grp)
        x = np.clip(theta + self._draw_offset(grp), 0, 1)
        noisy = np.clip(theta + self.rng.normal(cfg.mu_t_train, cfg.sigma_t_train, grp.size), 0, 1)
        y = (noisy > 0.5).astype(float)
        self.X[: grp.size] = x
        self.Y[: grp.size] = y
        self.size = grp.size

    def predict(self, x) -> np.ndarray:
        return self.model.predict_proba(np.atleast_1d(np.asarray(x, dtype=float)))

    def step(self) -> dict:
        cfg, rng = self.cfg, self.rng
        i = int(rng.integers(cfg.n))
        a = int(self.group[i])
        x_i = float(self.x[i])
        if self.model.degenerate:
            yhat = self.model.constant
        else:
            yhat = float(expit(self.model.w[0] * x_i + self.model.b))
        d = int(yhat > 0.5)
        prob = self.theta[i] + rng.normal(0, cfg.sigma_t[a])
        if cfg.loop_type == "outcome":
            prob += cfg.shift * (2 * d - 1)
        y = int(rng.random() < min(max(prob, 0.0), 1.0))
        appended = cfg.loop_type != "mlmodel" or d == 1
        if appended:
            self.X[self.size] = x_i
            self.Y[self.size] = y
            self.size += 1
        self._feedback(i, d, y)
        self.t += 1
        if self.t % cfg.retrain_every == 0:
            self.model = fit_logistic(self.X[: self.size], self.Y[: self.size], init=self.model)
        return {"user": i, "d": d, "y": y, "appended": appended}

    def _feedback(self, i, d, y):
        lt = self.cfg.loop_type
        if lt == "sampling" and d == 0:
            share_g1 = float(np.mean(self.group == 0))
            g = np.int8(0 if self.rng.random() < share_g1 else 1)
            self.group[i] = g
            self.theta[i] = self._draw_theta(np.array([g]))[0]
            self.offset[i] = self._draw_offset(np.array([g]))[0]
            self.x[i] = np.clip(self.theta[i] + self.offset[i], 0, 1)
        elif lt == "individual":
            self.theta[i] = (1 - self.cfg.mix) * self.theta[i] + self.cfg.mix * d
            self.x[i] = np.clip(self.theta[i] + self.offset[i], 0, 1)
        elif lt == "feature":
            # the initial proxy counts as one pseudo-observation
            self.visits[i] += 1
            self.clicks[i] += y
            self.x[i] = (self.x0[i] + self.clicks[i]) / (1 + self.visits[i])

    def snapshot(self) -> list:
        yhat = self.predict(self.x)
        rows = []
        for k, g in enumerate(GROUPS):
            m = self.group == k
            cnt = int(m.sum())
            rows.append(("count", g, float(cnt)))
            if cnt == 0:
                continue
            rows += [
                ("theta_mean", g, float(self.theta[m].mean())),
                ("x_mean", g, float(self.x[m].mean())),
                ("bias_x_theta", g, float((self.x[m] - self.theta[m]).mean())),
                ("abs_err_x_theta", g, float(np.abs(self.x[m] - self.theta[m]).mean())),
                ("pred_err_theta", g, float((yhat[m] - self.theta[m]).mean())),
                ("recommend_rate", g, float((yhat[m] > 0.5).mean())),
            ]
        rows += [("buffer_size", "all", float(self.size)),
                 ("model_w", "all", float(self.model.w[0])),
                 ("model_b", "all", float(self.model.b))]
        return [(self.t, m, g, v) for m, g, v in rows]


def simulate(cfg: LoopConfig) -> SimResult:
    pipe = Pipeline(cfg)
    res = SimResult(cfg, pipe.snapshot())
    for _ in range(cfg.steps):
        pipe.step()
        if pipe.t % cfg.record_every == 0:
            res.rows += pipe.snapshot()
    if cfg.steps % cfg.record_every:
        res.rows += pipe.snapshot()
    return res


def with_seed(cfg: LoopConfig, seed: int) -> LoopConfig:
    return replace(cfg, seed=seed)
