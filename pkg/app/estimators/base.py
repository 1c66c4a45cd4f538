"""
Measurement Classifier Base - Shared fit/predict plumbing for every estimator
Input validation, standardisation and the score-to-label rule live here
"""

from typing import Any, Dict

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.preprocessing import StandardScaler
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from app.models.errors import DimensionMismatchError, NonFiniteFeatureError, SingleClassError

GOOD = 0
BAD = 1


def _check_finite(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise NonFiniteFeatureError("features contain NaN or infinity")
    return X


class MeasurementClassifier(ClassifierMixin, BaseEstimator):
    """
    Binary good/bad classifier over measurement vectors.

    Subclasses implement `_fit_standardized` and `_decision` on
    standardised features; this class owns the scaler, so the statistics
    travel with the model. Labels are 0 (good) and 1 (bad); a decision
    score >= 0 means bad.
    """

    def fit(self, X, y):
        X = _check_finite(X)
        X, y = check_X_y(X, y, dtype=np.float64)
        y = np.asarray(y).astype(int)
        present = np.unique(y)
        if present.size < 2:
            raise SingleClassError(f"training data holds a single label: {present.tolist()}")
        if not set(present.tolist()) <= {GOOD, BAD}:
            raise ValueError(f"labels must be 0 (good) or 1 (bad), got {present.tolist()}")

        self.classes_ = np.array([GOOD, BAD])
        self.n_features_in_ = X.shape[1]
        self.scaler_ = StandardScaler().fit(X)
        self._fit_standardized(self.scaler_.transform(X), y)
        return self

    def _validate_input(self, X) -> np.ndarray:
        check_is_fitted(self, "scaler_")
        X = check_array(_check_finite(np.atleast_2d(X)), dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise DimensionMismatchError(f"model expects {self.n_features_in_} features, got {X.shape[1]}")
        return X

    def standardize(self, X) -> np.ndarray:
        return self.scaler_.transform(self._validate_input(X))

    def decision_function(self, X) -> np.ndarray:
        return self._decision(self.standardize(X))

    def predict(self, X) -> np.ndarray:
        return np.where(self.decision_function(X) >= 0.0, BAD, GOOD)

    def _fit_standardized(self, Z: np.ndarray, y: np.ndarray) -> None:
        raise NotImplementedError

    def _decision(self, Z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # Serialisation

    def get_state(self) -> Dict[str, Any]:
        """Fitted attributes as JSON-compatible values."""
        check_is_fitted(self, "scaler_")
        state = {
            "n_features": int(self.n_features_in_),
            "mean": self.scaler_.mean_.tolist(),
            "scale": self.scaler_.scale_.tolist(),
        }
        state.update(self._model_state())
        return state

    @classmethod
    def from_state(cls, params: Dict[str, Any], state: Dict[str, Any]) -> "MeasurementClassifier":
        estimator = cls(**params)
        scaler = StandardScaler()
        scaler.mean_ = np.asarray(state["mean"], dtype=np.float64)
        scaler.scale_ = np.asarray(state["scale"], dtype=np.float64)
        scaler.var_ = scaler.scale_ ** 2
        scaler.n_features_in_ = int(state["n_features"])
        scaler.n_samples_seen_ = 0
        estimator.scaler_ = scaler
        estimator.n_features_in_ = int(state["n_features"])
        estimator.classes_ = np.array([GOOD, BAD])
        estimator._load_model_state(state)
        return estimator

    def _model_state(self) -> Dict[str, Any]:
        raise NotImplementedError

    def _load_model_state(self, state: Dict[str, Any]) -> None:
        raise NotImplementedError
