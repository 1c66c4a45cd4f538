"""
Image Metrics - Reconstruction quality measures used by the privacy audit
"""

from typing import Sequence

import numpy as np

from app.models.errors import DimensionMismatchError
from app.models.image import GrayImage

PEAK = 1.0


def mse(a: GrayImage, b: GrayImage) -> float:
    if a.pixels.shape != b.pixels.shape:
        raise DimensionMismatchError(f"image shapes differ: {a.pixels.shape} vs {b.pixels.shape}")
    return float(np.mean((a.pixels - b.pixels) ** 2))


def psnr(a: GrayImage, b: GrayImage) -> float:
    """
    Peak signal-to-noise ratio in dB for images in [0, 1].

    Returns:
        10 log10(1 / MSE), or float("inf") when the images are identical
    """
    error = mse(a, b)
    if error == 0.0:
        return float("inf")
    return float(10.0 * np.log10(PEAK ** 2 / error))


def correlation(a: GrayImage, b: GrayImage) -> float:
    """Pearson correlation of the pixel vectors; 0.0 when either is constant."""
    if a.pixels.shape != b.pixels.shape:
        raise DimensionMismatchError(f"image shapes differ: {a.pixels.shape} vs {b.pixels.shape}")
    x = a.vector() - a.mean()
    y = b.vector() - b.mean()
    denominator = np.linalg.norm(x) * np.linalg.norm(y)
    if denominator == 0.0:
        return 0.0
    return float(np.dot(x, y) / denominator)


def is_legible(reconstruction: GrayImage, truth: GrayImage, decoys: Sequence[GrayImage]) -> bool:
    """
    Legibility proxy: the reconstruction is legible when it correlates more
    strongly with the true rendering than with a strict majority of decoys.
    """
    if not decoys:
        raise ValueError("at least one decoy rendering is required")
    own = correlation(reconstruction, truth)
    wins = sum(own > correlation(reconstruction, decoy) for decoy in decoys)
    return wins * 2 > len(decoys)
