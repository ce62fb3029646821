"""One-dimensional logistic regression, used to learn decision thresholds for
score-valued baselines (Newton-iterated, max 100 steps, tol 1e-8)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class LogisticThreshold:
    """P(y=1 | s) = sigmoid(slope * s + intercept)."""

    slope: float
    intercept: float
    n_iterations: int
    converged: bool

    def predict_proba(self, scores) -> np.ndarray:
        z = self.slope * np.asarray(scores, dtype=np.float64) + self.intercept
        return 1.0 / (1.0 + np.exp(-z))

    def predict(self, scores) -> np.ndarray:
        return (self.predict_proba(scores) >= 0.5).astype(np.int64)

    def decision_threshold(self) -> float:
        """The score where the predicted probability crosses 0.5."""
        if self.slope == 0.0:
            return float("nan")
        return -self.intercept / self.slope


def fit_logistic_threshold(scores, y, max_iter: int = 100, tol: float = 1e-8) -> LogisticThreshold:
    """Newton's method on the 2-parameter logistic log-likelihood."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    X = np.column_stack([s, np.ones_like(s)])
    beta = np.zeros(2)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        z = X @ beta
        p = 1.0 / (1.0 + np.exp(-z))
        grad = X.T @ (p - y)
        w = p * (1.0 - p)
        hess = X.T @ (X * w[:, None])
        # ridge jitter keeps the Newton step defined on separable data
        hess += 1e-10 * np.eye(2)
        step = np.linalg.solve(hess, grad)
        beta -= step
        if np.max(np.abs(step)) < tol:
            converged = True
            break
    return LogisticThreshold(
        slope=float(beta[0]), intercept=float(beta[1]), n_iterations=it, converged=converged
    )
