"""
Logistic Regression - Damped Newton (IRLS) on the ridge-penalised log-loss
"""

from typing import Any, Dict

import numpy as np
from scipy.linalg import LinAlgError, solve
from scipy.special import expit

from app.estimators.base import MeasurementClassifier

ARMIJO = 1e-4


class LogisticRegression(MeasurementClassifier):
    """
    Binary logistic regression.

    Objective: mean log-loss + lam / 2 * ||w||^2 (bias unpenalised).

    Args:
        lam: Ridge strength
        tol: Stop when the gradient norm falls below this value
        max_iter: Newton iteration cap
    """

    def __init__(self, lam: float = 1e-4, tol: float = 1e-8, max_iter: int = 100):
        self.lam = lam
        self.tol = tol
        self.max_iter = max_iter

    @staticmethod
    def _design(Z: np.ndarray) -> np.ndarray:
        return np.hstack([Z, np.ones((Z.shape[0], 1))])

    def _penalty(self, dim: int) -> np.ndarray:
        penalty = np.full(dim, self.lam)
        penalty[-1] = 0.0
        return penalty

    def loss(self, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
        z = X @ theta
        penalty = self._penalty(theta.size)
        return float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * np.sum(penalty * theta ** 2))

    def gradient(self, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        p = expit(X @ theta)
        return X.T @ (p - y) / X.shape[0] + self._penalty(theta.size) * theta

    def _fit_standardized(self, Z: np.ndarray, y: np.ndarray) -> None:
        X = self._design(Z)
        y = y.astype(np.float64)
        n, dim = X.shape
        penalty = np.diag(self._penalty(dim))
        theta = np.zeros(dim)
        loss = self.loss(theta, X, y)
        self.initial_loss_ = loss

        iteration = 0
        grad = self.gradient(theta, X, y)
        while np.linalg.norm(grad) >= self.tol and iteration < self.max_iter:
            iteration += 1
            p = expit(X @ theta)
            weights = p * (1.0 - p)
            hessian = (X.T * weights) @ X / n + penalty
            try:
                step = solve(hessian, grad, assume_a="pos")
            except LinAlgError:
                step = np.linalg.lstsq(hessian, grad, rcond=None)[0]

            # backtracking line search on the convex objective
            t = 1.0
            slope = float(grad @ step)
            while t > 1e-12:
                candidate = theta - t * step
                candidate_loss = self.loss(candidate, X, y)
                if candidate_loss <= loss - ARMIJO * t * slope:
                    break
                t *= 0.5
            else:
                break
            theta, loss = candidate, candidate_loss
            grad = self.gradient(theta, X, y)

        self.coef_ = theta[:-1]
        self.intercept_ = float(theta[-1])
        self.n_iter_ = iteration
        self.loss_ = loss
        self.grad_norm_ = float(np.linalg.norm(grad))
        self.converged_ = self.grad_norm_ < self.tol

    def _decision(self, Z: np.ndarray) -> np.ndarray:
        return Z @ self.coef_ + self.intercept_

    def predict_proba(self, X) -> np.ndarray:
        p_bad = expit(self.decision_function(X))
        return np.column_stack([1.0 - p_bad, p_bad])

    def _model_state(self) -> Dict[str, Any]:
        return {
            "coef": self.coef_.tolist(),
            "intercept": self.intercept_,
            "n_iter": self.n_iter_,
            "grad_norm": self.grad_norm_,
        }

    def _load_model_state(self, state: Dict[str, Any]) -> None:
        self.coef_ = np.asarray(state["coef"], dtype=np.float64)
        self.intercept_ = float(state["intercept"])
        self.n_iter_ = int(state["n_iter"])
        self.grad_norm_ = float(state["grad_norm"])
        self.converged_ = self.grad_norm_ < self.tol
