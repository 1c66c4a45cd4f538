"""
Synthetic feature sets shared by estimator and service tests
"""
import numpy as np


def separable_blobs(rng, n_per_class: int = 40, dim: int = 4, gap: float = 6.0):
    """Two well-separated Gaussian clouds labelled 0 and 1"""
    good = rng.normal(size=(n_per_class, dim))
    bad = rng.normal(size=(n_per_class, dim)) + gap
    X = np.vstack([good, bad])
    y = np.array([0] * n_per_class + [1] * n_per_class)
    return X, y


def xor_points(rng, n_per_quadrant: int = 25, spread: float = 0.2):
    """XOR layout: label 1 in the first and third quadrants"""
    centres = [(1, 1, 1), (-1, -1, 1), (1, -1, 0), (-1, 1, 0)]
    X, y = [], []
    for cx, cy, label in centres:
        X.append(rng.normal(scale=spread, size=(n_per_quadrant, 2)) + (cx, cy))
        y += [label] * n_per_quadrant
    return np.vstack(X), np.array(y)


class ConstantEstimator:
    """Stand-in estimator returning one fixed score for every row"""

    def __init__(self, score: float):
        self.score = score

    def decision_function(self, X):
        return np.full(np.atleast_2d(X).shape[0], self.score)


class OracleEstimator:
    """Stand-in estimator whose score is the sign of the first feature"""

    def decision_function(self, X):
        return np.atleast_2d(X)[:, 0]
