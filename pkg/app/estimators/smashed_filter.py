"""
Smashed Filter - Nearest-neighbour classification on compressed measurements
"""

from typing import Any, Dict

import numpy as np
from sklearn.neighbors import NearestNeighbors

from app.estimators.base import BAD, GOOD, MeasurementClassifier


class SmashedFilter(MeasurementClassifier):
    """
    Maximum-likelihood template match under white Gaussian noise, which
    reduces to the nearest training measurement of each class.

    Score = distance to nearest good - distance to nearest bad.
    """

    def __init__(self, n_neighbors: int = 1):
        self.n_neighbors = n_neighbors

    def _fit_standardized(self, Z: np.ndarray, y: np.ndarray) -> None:
        self.templates_ = [Z[y == GOOD], Z[y == BAD]]
        self._build()

    def _build(self) -> None:
        self.index_ = [
            NearestNeighbors(n_neighbors=min(self.n_neighbors, len(t))).fit(t) for t in self.templates_
        ]

    def _class_distance(self, label: int, Z: np.ndarray) -> np.ndarray:
        distances, _ = self.index_[label].kneighbors(Z)
        return distances.mean(axis=1)

    def _decision(self, Z: np.ndarray) -> np.ndarray:
        return self._class_distance(GOOD, Z) - self._class_distance(BAD, Z)

    def _model_state(self) -> Dict[str, Any]:
        return {
            "good_templates": self.templates_[GOOD].tolist(),
            "bad_templates": self.templates_[BAD].tolist(),
        }

    def _load_model_state(self, state: Dict[str, Any]) -> None:
        dim = self.n_features_in_
        self.templates_ = [
            np.asarray(state["good_templates"], dtype=np.float64).reshape(-1, dim),
            np.asarray(state["bad_templates"], dtype=np.float64).reshape(-1, dim),
        ]
        self._build()
