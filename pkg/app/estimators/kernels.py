"""
Kernels - Gram blocks for the SVM
"""

import numpy as np
from scipy.spatial.distance import cdist

from app.models.classifier import KernelKind, KernelSpec


def kernel_matrix(spec: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """K[i, j] = k(A[i], B[j])"""
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    if spec.kind is KernelKind.LINEAR:
        return A @ B.T
    if spec.kind is KernelKind.POLYNOMIAL:
        return (spec.offset + (A @ B.T) / spec.scale ** 2) ** spec.degree
    return np.exp(-spec.gamma * cdist(A, B, "sqeuclidean"))


def kernel_diagonal(spec: KernelSpec, A: np.ndarray) -> np.ndarray:
    """k(A[i], A[i]) for every row."""
    A = np.atleast_2d(A)
    if spec.kind is KernelKind.RBF:
        return np.ones(A.shape[0])
    norms = np.einsum("ij,ij->i", A, A)
    if spec.kind is KernelKind.LINEAR:
        return norms
    return (spec.offset + norms / spec.scale ** 2) ** spec.degree
