"""Small logistic-regression model shared by the bias and feedback-loop experiments."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, log_expit


@dataclass(frozen=True)
class LogisticModel:
    """P(y=1 | x) = sigmoid(x @ w + b).

    ``constant`` holds the class rate when the training labels were all one
    class; the model then ignores x."""

    w: np.ndarray
    b: float
    constant: float | None = None

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if self.constant is not None:
            return np.full(X.shape[0], self.constant)
        return expit(X @ self.w + self.b)

    @property
    def degenerate(self) -> bool:
        return self.constant is not None

    def params(self) -> np.ndarray:
        return np.append(self.w, self.b)


def loss_and_grad(theta, X, y, l2: float = 0.0):
    """Mean negative log-likelihood and its gradient; theta = (w..., b)."""
    w, b = theta[:-1], theta[-1]
    z = X @ w + b
    loss = -np.mean(y * log_expit(z) + (1 - y) * log_expit(-z)) + 0.5 * l2 * w @ w
    r = (expit(z) - y) / y.size
    grad = np.append(X.T @ r + l2 * w, r.sum())
    return loss, grad


def fit_logistic(X, y, init: LogisticModel | None = None, tol: float = 1e-8,
                 max_iter: int = 500, l2: float = 0.0) -> LogisticModel:
    """Fit by L-BFGS on the analytic gradient, warm-started from ``init``.

    Deterministic given the data order. A single-class ``y`` returns a
    constant model at the class rate."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.size or y.size == 0:
        raise ValueError("X and y must be nonempty and aligned")
    if np.all(y == y[0]):
        return LogisticModel(np.zeros(X.shape[1]), 0.0, float(y[0]))
    if init is not None and not init.degenerate and init.w.size == X.shape[1]:
        theta0 = init.params()
    else:
        theta0 = np.zeros(X.shape[1] + 1)
    res = minimize(loss_and_grad, theta0, args=(X, y, l2), jac=True, method="L-BFGS-B",
                   options={"gtol": tol, "maxiter": max_iter})
    return LogisticModel(res.x[:-1].copy(), float(res.x[-1]))
