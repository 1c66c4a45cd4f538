"""
Wavelet Service - Periodic orthonormal Daubechies-10 DWT
Provides the sparsifying basis psi used by measurement and reconstruction
"""

from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from scipy.special import comb

from app.models.errors import DimensionMismatchError
from app.models.image import GrayImage
from app.models.wavelet import Db10Filter, WaveletCoeffs

DB_ORDER = 10
SUM_TOLERANCE = 1e-12
ORTHOGONALITY_TOLERANCE = 1e-10


def daubechies_lowpass(order: int) -> np.ndarray:
    """
    Daubechies scaling filter with `order` vanishing moments (2*order taps).

    Built by spectral factorisation: the roots of the half-band polynomial
    in y = sin^2(w/2) are mapped to z, the root of each reciprocal pair with
    |z| >= 1 is kept, and the result is multiplied by (1 + z)^order.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    if order == 1:
        return np.array([1.0, 1.0]) / np.sqrt(2.0)

    half_band = [comb(order - 1 + k, k, exact=True) for k in range(order)][::-1]
    y_roots = np.roots(half_band).astype(complex)

    q = np.poly1d([1.0])
    for y in y_roots:
        part = 2.0 * np.sqrt(y * (y - 1.0))
        const = 1.0 - 2.0 * y
        z = const + part
        if abs(z) < 1:
            z = const - part
        q = q * np.poly1d([1.0, -z])

    taps = (np.poly1d([1.0, 1.0]) ** order * np.real(q)).c[::-1]
    return taps / np.sum(taps) * np.sqrt(2.0)


def quadrature_mirror(lowpass: np.ndarray) -> np.ndarray:
    """g[n] = (-1)^n h[L-1-n]"""
    signs = np.where(np.arange(lowpass.size) % 2 == 0, 1.0, -1.0)
    return signs * lowpass[::-1]


def check_filter(filt: Db10Filter) -> None:
    """
    Verify the orthonormality invariants; raise ValueError on any violation.
    """
    h = filt.lowpass
    if abs(h.sum() - np.sqrt(2.0)) > SUM_TOLERANCE:
        raise ValueError(f"lowpass sum {h.sum()!r} != sqrt(2)")
    if abs(np.dot(h, h) - 1.0) > SUM_TOLERANCE:
        raise ValueError(f"lowpass energy {np.dot(h, h)!r} != 1")
    for shift in range(1, h.size // 2):
        inner = float(np.dot(h[:-2 * shift], h[2 * shift:]))
        if abs(inner) > ORTHOGONALITY_TOLERANCE:
            raise ValueError(f"shifted orthogonality fails at k={shift}: {inner!r}")


@lru_cache(maxsize=None)
def db_filter(order: int = DB_ORDER) -> Db10Filter:
    """Verified Daubechies filter pair (cached; arrays are read-only)."""
    lowpass = daubechies_lowpass(order)
    highpass = quadrature_mirror(lowpass)
    lowpass.setflags(write=False)
    highpass.setflags(write=False)
    filt = Db10Filter(lowpass=lowpass, highpass=highpass)
    check_filter(filt)
    return filt


def _analysis_1d(x: np.ndarray, filt: Db10Filter, axis: int) -> np.ndarray:
    """One periodic analysis step along `axis`: [approx | detail]."""
    x = np.moveaxis(x, axis, -1)
    n = x.shape[-1]
    base = 2 * np.arange(n // 2)
    approx = np.zeros(x.shape[:-1] + (n // 2,))
    detail = np.zeros_like(approx)
    for k in range(filt.length):
        segment = x[..., (base + k) % n]
        approx += filt.lowpass[k] * segment
        detail += filt.highpass[k] * segment
    return np.moveaxis(np.concatenate([approx, detail], axis=-1), -1, axis)


def _synthesis_1d(c: np.ndarray, filt: Db10Filter, axis: int) -> np.ndarray:
    """Adjoint (= inverse) of _analysis_1d along `axis`."""
    c = np.moveaxis(c, axis, -1)
    n = c.shape[-1]
    approx, detail = c[..., :n // 2], c[..., n // 2:]
    base = 2 * np.arange(n // 2)
    x = np.zeros(c.shape)
    for k in range(filt.length):
        # indices are distinct for fixed k, so fancy-index accumulation is safe
        x[..., (base + k) % n] += filt.lowpass[k] * approx + filt.highpass[k] * detail
    return np.moveaxis(x, -1, axis)


def _check_levels(shape: Tuple[int, int], levels: int) -> None:
    if levels < 1:
        raise DimensionMismatchError(f"levels must be >= 1, got {levels}")
    factor = 2 ** levels
    if shape[0] % factor or shape[1] % factor:
        raise DimensionMismatchError(
            f"{levels} levels infeasible for {shape[0]}x{shape[1]} (needs multiples of {factor})"
        )


def padded_shape(height: int, width: int) -> Tuple[int, int]:
    """Smallest power-of-two dimensions covering (height, width)."""
    return 1 << max(height - 1, 0).bit_length(), 1 << max(width - 1, 0).bit_length()


def pad_image(img: GrayImage) -> np.ndarray:
    """
    Embed the image top-left in its dyadic superset by mirror extension.

    35x100 becomes 64x128.
    """
    target_h, target_w = padded_shape(img.height, img.width)
    return np.pad(
        img.pixels,
        ((0, target_h - img.height), (0, target_w - img.width)),
        mode="symmetric",
    )


def crop(raster: np.ndarray, height: int, width: int) -> np.ndarray:
    """Inverse of pad_image on the original region."""
    return np.array(raster[:height, :width])


def dwt2(raster: np.ndarray, levels: int, filt: Optional[Db10Filter] = None) -> WaveletCoeffs:
    """
    Orthonormal separable 2-D DWT with periodic boundaries.

    Args:
        raster: 2-D array with dyadic-compatible dimensions
        levels: Decomposition depth

    Returns:
        WaveletCoeffs in pyramid layout
    """
    raster = np.asarray(raster, dtype=np.float64)
    if raster.ndim != 2:
        raise DimensionMismatchError(f"raster must be 2-D, got shape {raster.shape}")
    _check_levels(raster.shape, levels)
    filt = filt or db_filter()

    out = raster.copy()
    h, w = raster.shape
    for _ in range(levels):
        block = out[:h, :w]
        block = _analysis_1d(block, filt, axis=1)
        block = _analysis_1d(block, filt, axis=0)
        out[:h, :w] = block
        h, w = h // 2, w // 2
    return WaveletCoeffs(coeffs=out.reshape(-1), padded_height=raster.shape[0], padded_width=raster.shape[1], levels=levels)


def idwt2(coeffs: WaveletCoeffs, filt: Optional[Db10Filter] = None) -> np.ndarray:
    """Inverse of dwt2 (also its adjoint, the transform being orthonormal)."""
    if not isinstance(coeffs, WaveletCoeffs):
        raise DimensionMismatchError("idwt2 expects WaveletCoeffs with a band layout")
    filt = filt or db_filter()
    out = np.array(coeffs.raster(), dtype=np.float64)
    for level in range(coeffs.levels, 0, -1):
        h = coeffs.padded_height // 2 ** (level - 1)
        w = coeffs.padded_width // 2 ** (level - 1)
        block = out[:h, :w]
        block = _synthesis_1d(block, filt, axis=0)
        block = _synthesis_1d(block, filt, axis=1)
        out[:h, :w] = block
    return out


def coeffs_from_vector(values: np.ndarray, height: int, width: int, levels: int) -> WaveletCoeffs:
    return WaveletCoeffs(coeffs=values, padded_height=height, padded_width=width, levels=levels)


def image_coeffs(img: GrayImage, levels: int) -> WaveletCoeffs:
    """w = psi' pad(x)"""
    return dwt2(pad_image(img), levels)


def image_from_coeffs(coeffs: WaveletCoeffs, height: int, width: int, clamp: bool = True) -> GrayImage:
    """crop(idwt2(w)), clamped into [0, 1] when requested."""
    raster = crop(idwt2(coeffs), height, width)
    if clamp:
        raster = np.clip(raster, 0.0, 1.0)
    return GrayImage(pixels=raster)


def analysis_matrix(height: int, width: int, levels: int) -> np.ndarray:
    """
    Materialise dwt2 as an explicit (h*w) x (h*w) matrix.

    Only intended for small rasters (tests, oracles).
    """
    size = height * width
    matrix = np.empty((size, size))
    for index in range(size):
        basis = np.zeros(size)
        basis[index] = 1.0
        matrix[:, index] = dwt2(basis.reshape(height, width), levels).coeffs
    return matrix


def significant_fraction(coeffs: WaveletCoeffs, relative: float = 1e-3) -> float:
    """Fraction of coefficients with |w| > relative * max|w|."""
    magnitudes = np.abs(coeffs.coeffs)
    peak = magnitudes.max()
    if peak == 0:
        return 0.0
    return float(np.count_nonzero(magnitudes > relative * peak) / magnitudes.size)
