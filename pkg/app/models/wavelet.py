"""
Wavelet Models - Filter pair and coefficient container for the sparsifying basis
"""

from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

PADDED_HEIGHT = 64
PADDED_WIDTH = 128
# Deepest depth that divides 64x128; the approximation band is 1x2, so a blank page is 2-sparse
DEFAULT_LEVELS = 6


class Db10Filter(BaseModel):
    """
    Orthonormal quadrature-mirror filter pair.

    Attributes:
        lowpass: Scaling (analysis lowpass) taps h
        highpass: Wavelet taps g[n] = (-1)^n h[L-1-n]
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    lowpass: np.ndarray
    highpass: np.ndarray

    @model_validator(mode="after")
    def _check_pair(self) -> "Db10Filter":
        if self.lowpass.shape != self.highpass.shape or self.lowpass.ndim != 1:
            raise ValueError("lowpass and highpass must be 1-D of equal length")
        if self.lowpass.size % 2:
            raise ValueError("filter length must be even")
        return self

    @property
    def length(self) -> int:
        return int(self.lowpass.size)


class WaveletCoeffs(BaseModel):
    """
    2-D DWT coefficients in the standard pyramid layout.

    The (padded_height, padded_width) coefficient raster holds the
    approximation band in its top-left (h / 2^levels, w / 2^levels) corner;
    each level l contributes three detail bands (LH, HL, HH) around it.
    `coeffs` is the row-major flattening of that raster.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    coeffs: np.ndarray
    padded_height: int = Field(..., gt=0)
    padded_width: int = Field(..., gt=0)
    levels: int = Field(..., ge=1)

    @field_validator("coeffs", mode="before")
    @classmethod
    def _coerce(cls, value):
        array = np.array(value, dtype=np.float64).reshape(-1)
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def _check_layout(self) -> "WaveletCoeffs":
        if self.coeffs.size != self.padded_height * self.padded_width:
            raise ValueError(
                f"coeffs length {self.coeffs.size} != {self.padded_height} x {self.padded_width}"
            )
        factor = 2 ** self.levels
        if self.padded_height % factor or self.padded_width % factor:
            raise ValueError(
                f"{self.levels} levels infeasible for {self.padded_height}x{self.padded_width}"
            )
        return self

    @property
    def length(self) -> int:
        return int(self.coeffs.size)

    def raster(self) -> np.ndarray:
        return self.coeffs.reshape(self.padded_height, self.padded_width)

    def approximation_shape(self) -> Tuple[int, int]:
        factor = 2 ** self.levels
        return self.padded_height // factor, self.padded_width // factor

    def band_layout(self) -> List[Tuple[str, int, Tuple[int, int, int, int]]]:
        """
        Describe every band as (name, level, (row0, row1, col0, col1)).

        Level 1 is the finest scale.
        """
        bands = []
        approx_h, approx_w = self.approximation_shape()
        bands.append(("LL", self.levels, (0, approx_h, 0, approx_w)))
        for level in range(self.levels, 0, -1):
            h = self.padded_height // 2 ** level
            w = self.padded_width // 2 ** level
            bands.append(("LH", level, (h, 2 * h, 0, w)))
            bands.append(("HL", level, (0, h, w, 2 * w)))
            bands.append(("HH", level, (h, 2 * h, w, 2 * w)))
        return bands
