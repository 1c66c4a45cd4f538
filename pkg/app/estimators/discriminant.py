"""
Gaussian Discriminants - Linear (pooled covariance) and quadratic (per class)
"""

from typing import Any, Dict, List

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from app.estimators.base import BAD, GOOD, MeasurementClassifier

RIDGE_FACTOR = 1e-6


def ridge_term(covariance: np.ndarray, factor: float = RIDGE_FACTOR) -> float:
    """epsilon = factor * trace(cov) / M, with a floor for all-constant features."""
    dim = covariance.shape[0]
    trace = float(np.trace(covariance))
    return factor * trace / dim if trace > 0 else factor


def _class_covariance(Z: np.ndarray) -> np.ndarray:
    if Z.shape[0] < 2:
        return np.zeros((Z.shape[1], Z.shape[1]))
    return np.atleast_2d(np.cov(Z, rowvar=False, ddof=1))


class _GaussianModel:
    """Mean, ridged covariance and its Cholesky factor."""

    def __init__(self, mean: np.ndarray, covariance: np.ndarray):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.covariance = np.asarray(covariance, dtype=np.float64)
        self.chol = cholesky(self.covariance, lower=True)
        self.log_det = 2.0 * float(np.sum(np.log(np.diag(self.chol))))

    def log_density(self, Z: np.ndarray) -> np.ndarray:
        """Gaussian log density up to the shared -M/2 log(2 pi) term."""
        whitened = solve_triangular(self.chol, (Z - self.mean).T, lower=True)
        return -0.5 * np.sum(whitened ** 2, axis=0) - 0.5 * self.log_det


class GaussianDiscriminant(MeasurementClassifier):
    """
    Gaussian class-conditional classifier.

    The score is the log-likelihood ratio of bad over good including the
    class priors. `pooled` selects one shared covariance (LD) or one per
    class (QD).

    Args:
        ridge: Ridge factor; epsilon = ridge * trace(cov) / M is added to the diagonal
    """
    pooled = True

    def __init__(self, ridge: float = RIDGE_FACTOR):
        self.ridge = ridge

    def _fit_standardized(self, Z: np.ndarray, y: np.ndarray) -> None:
        groups = [Z[y == GOOD], Z[y == BAD]]
        counts = np.array([len(g) for g in groups], dtype=np.float64)
        means = [g.mean(axis=0) for g in groups]
        covariances = [_class_covariance(g) for g in groups]

        if self.pooled:
            dof = max(counts.sum() - 2.0, 1.0)
            pooled = ((counts[0] - 1) * covariances[0] + (counts[1] - 1) * covariances[1]) / dof
            covariances = [pooled, pooled]

        self.priors_ = counts / counts.sum()
        self.means_ = np.vstack(means)
        self.covariances_ = np.stack([
            cov + ridge_term(cov, self.ridge) * np.eye(cov.shape[0]) for cov in covariances
        ])
        self._build()

    def _build(self) -> None:
        self.models_: List[_GaussianModel] = [
            _GaussianModel(self.means_[k], self.covariances_[k]) for k in (GOOD, BAD)
        ]

    def _decision(self, Z: np.ndarray) -> np.ndarray:
        good, bad = self.models_
        return (
            bad.log_density(Z) + np.log(self.priors_[BAD])
            - good.log_density(Z) - np.log(self.priors_[GOOD])
        )

    def _model_state(self) -> Dict[str, Any]:
        return {
            "priors": self.priors_.tolist(),
            "means": self.means_.tolist(),
            "covariances": self.covariances_.tolist(),
        }

    def _load_model_state(self, state: Dict[str, Any]) -> None:
        self.priors_ = np.asarray(state["priors"], dtype=np.float64)
        self.means_ = np.asarray(state["means"], dtype=np.float64)
        self.covariances_ = np.asarray(state["covariances"], dtype=np.float64)
        self._build()


class LinearDiscriminant(GaussianDiscriminant):
    """LD: shared covariance, linear boundary."""
    pooled = True


class QuadraticDiscriminant(GaussianDiscriminant):
    """QD: per-class covariance, quadratic boundary."""
    pooled = False
