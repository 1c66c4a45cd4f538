"""
Support Vector Machine - Soft-margin kernel SVM trained by SMO
Working set: maximal violating pair; no shrinking
"""

from collections import OrderedDict
from typing import Any, Dict, Optional

import numpy as np

from app.estimators.base import MeasurementClassifier
from app.estimators.kernels import kernel_diagonal, kernel_matrix
from app.models.classifier import KernelSpec

TAU = 1e-12


class KernelRowCache:
    """LRU cache of full kernel rows K[i, :] over the training set."""

    def __init__(self, Z: np.ndarray, kernel: KernelSpec, capacity: int = 2048):
        self.Z = Z
        self.kernel = kernel
        self.capacity = max(int(capacity), 2)
        self.rows: "OrderedDict[int, np.ndarray]" = OrderedDict()
        self.hits = 0
        self.misses = 0

    def row(self, index: int) -> np.ndarray:
        cached = self.rows.get(index)
        if cached is not None:
            self.rows.move_to_end(index)
            self.hits += 1
            return cached
        self.misses += 1
        values = kernel_matrix(self.kernel, self.Z[index:index + 1], self.Z)[0]
        self.rows[index] = values
        if len(self.rows) > self.capacity:
            self.rows.popitem(last=False)
        return values


class SupportVectorMachine(MeasurementClassifier):
    """
    Binary C-SVM.

    Labels 0/1 are mapped to -1/+1 internally; the decision value is
    sum_t alpha_t y_t k(x_t, x) + b.

    Args:
        C: Box constraint
        kernel: KernelSpec (linear, polynomial or rbf)
        eps: Stopping tolerance on the maximal KKT violation
        max_iter: Pair-update cap
        cache_rows: Kernel rows kept in the LRU cache
    """

    def __init__(
        self,
        C: float = 1.0,
        kernel: Optional[KernelSpec] = None,
        eps: float = 1e-3,
        max_iter: int = 200000,
        cache_rows: int = 2048
    ):
        self.C = C
        self.kernel = kernel
        self.eps = eps
        self.max_iter = max_iter
        self.cache_rows = cache_rows

    @property
    def kernel_spec(self) -> KernelSpec:
        return self.kernel if self.kernel is not None else KernelSpec.linear()

    def _fit_standardized(self, Z: np.ndarray, y: np.ndarray) -> None:
        n = Z.shape[0]
        C = float(self.C)
        labels = np.where(y == 1, 1.0, -1.0)
        cache = KernelRowCache(Z, self.kernel_spec, self.cache_rows)
        diagonal = kernel_diagonal(self.kernel_spec, Z)

        alpha = np.zeros(n)
        grad = -np.ones(n)  # gradient of 1/2 a'Qa - e'a at a = 0
        iteration = 0
        violation = np.inf

        while iteration < self.max_iter:
            score = -labels * grad
            up = ((labels > 0) & (alpha < C)) | ((labels < 0) & (alpha > 0))
            low = ((labels > 0) & (alpha > 0)) | ((labels < 0) & (alpha < C))
            if not up.any() or not low.any():
                violation = 0.0
                break
            i = int(np.flatnonzero(up)[np.argmax(score[up])])
            j = int(np.flatnonzero(low)[np.argmin(score[low])])
            violation = score[i] - score[j]
            if violation < self.eps:
                break
            iteration += 1

            row_i = cache.row(i)
            row_j = cache.row(j)
            curvature = diagonal[i] + diagonal[j] - 2.0 * row_i[j]
            if curvature <= 0:
                curvature = TAU
            step = violation / curvature

            # keep both multipliers inside the box
            step = min(step, C - alpha[i] if labels[i] > 0 else alpha[i])
            step = min(step, alpha[j] if labels[j] > 0 else C - alpha[j])

            alpha[i] += labels[i] * step
            alpha[j] -= labels[j] * step
            alpha[i] = min(max(alpha[i], 0.0), C)
            alpha[j] = min(max(alpha[j], 0.0), C)
            grad += labels * step * (row_i - row_j)

        support = np.flatnonzero(alpha > 0)
        self.support_ = support
        self.support_vectors_ = Z[support]
        self.alpha_ = alpha[support]
        self.sv_labels_ = labels[support]
        self.intercept_ = -self._rho(alpha, grad, labels, C)
        self.n_iter_ = iteration
        self.kkt_violation_ = float(violation)
        self.converged_ = bool(violation < self.eps)
        self.cache_hits_ = cache.hits
        self.cache_misses_ = cache.misses

    @staticmethod
    def _rho(alpha: np.ndarray, grad: np.ndarray, labels: np.ndarray, C: float) -> float:
        """Threshold from free vectors, else the midpoint of the feasible interval."""
        yg = labels * grad
        free = (alpha > 0) & (alpha < C)
        if free.any():
            return float(np.mean(yg[free]))
        at_upper = alpha >= C
        at_lower = alpha <= 0
        upper_side = (at_upper & (labels < 0)) | (at_lower & (labels > 0))
        lower_side = (at_upper & (labels > 0)) | (at_lower & (labels < 0))
        ub = float(np.min(yg[upper_side])) if upper_side.any() else np.inf
        lb = float(np.max(yg[lower_side])) if lower_side.any() else -np.inf
        if np.isinf(ub) or np.isinf(lb):
            return float(lb if np.isinf(ub) else ub)
        return 0.5 * (ub + lb)

    def _decision(self, Z: np.ndarray) -> np.ndarray:
        if self.alpha_.size == 0:
            return np.full(Z.shape[0], self.intercept_)
        kernel = kernel_matrix(self.kernel_spec, Z, self.support_vectors_)
        return kernel @ (self.alpha_ * self.sv_labels_) + self.intercept_

    def dual_coef_sum(self) -> float:
        """sum_t alpha_t y_t; zero for a feasible dual."""
        return float(np.sum(self.alpha_ * self.sv_labels_))

    def margin_residuals(self) -> np.ndarray:
        """|f(x_t) - y_t| over free support vectors (0 < alpha < C)."""
        free = self.alpha_ < self.C
        if not free.any():
            return np.zeros(0)
        values = self._decision(self.support_vectors_[free])
        return np.abs(values - self.sv_labels_[free])

    def _model_state(self) -> Dict[str, Any]:
        return {
            "support_vectors": self.support_vectors_.tolist(),
            "alpha": self.alpha_.tolist(),
            "sv_labels": self.sv_labels_.tolist(),
            "intercept": self.intercept_,
            "n_iter": self.n_iter_,
            "kkt_violation": self.kkt_violation_,
        }

    def _load_model_state(self, state: Dict[str, Any]) -> None:
        dim = self.n_features_in_
        self.support_vectors_ = np.asarray(state["support_vectors"], dtype=np.float64).reshape(-1, dim)
        self.alpha_ = np.asarray(state["alpha"], dtype=np.float64)
        self.sv_labels_ = np.asarray(state["sv_labels"], dtype=np.float64)
        self.intercept_ = float(state["intercept"])
        self.n_iter_ = int(state["n_iter"])
        self.kkt_violation_ = float(state["kkt_violation"])
        self.converged_ = self.kkt_violation_ < self.eps
