"""
Sensing Models - Binary sensing matrix (the key) and compressed measurements
"""

from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator


class SensingDomain(str, Enum):
    """Which signal the matrix multiplies: raw pixels or wavelet coefficients"""
    PIXEL = "pixel"
    WAVELET = "wavelet"


class SensingMatrix(BaseModel):
    """
    Seeded M x N binary matrix with entries in {0, 1}.

    Attributes:
        rows: M, number of measurements
        cols: N, signal length (3500 pixel path, 8192 wavelet path)
        bits: Row-major bit-packed entries, shape (rows, ceil(cols / 8))
        seed: 64-bit generator seed; (seed, rows, cols) regenerate it exactly
        domain: Pixel or Wavelet
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    rows: int = Field(..., gt=0)
    cols: int = Field(..., gt=0)
    bits: np.ndarray
    seed: int = Field(..., ge=0, lt=2**64)
    domain: SensingDomain = SensingDomain.WAVELET

    _dense: Optional[np.ndarray] = PrivateAttr(default=None)

    @field_validator("bits", mode="before")
    @classmethod
    def _coerce_bits(cls, value):
        array = np.array(value, dtype=np.uint8)
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def _check_shape(self) -> "SensingMatrix":
        if self.rows >= self.cols:
            raise ValueError(f"rows ({self.rows}) must be < cols ({self.cols})")
        expected = (self.rows, (self.cols + 7) // 8)
        if self.bits.shape != expected:
            raise ValueError(f"packed bits shape {self.bits.shape} != {expected}")
        return self

    @property
    def shape(self):
        return self.rows, self.cols

    def dense(self) -> np.ndarray:
        """Unpacked float64 matrix (cached, read-only)."""
        if self._dense is None:
            unpacked = np.unpackbits(self.bits, axis=1, count=self.cols).astype(np.float64)
            unpacked.setflags(write=False)
            self._dense = unpacked
        return self._dense

    def ones_fraction(self) -> float:
        return float(self.dense().mean())

    def __eq__(self, other) -> bool:
        if not isinstance(other, SensingMatrix):
            return NotImplemented
        return (
            (self.rows, self.cols, self.seed, self.domain) == (other.rows, other.cols, other.seed, other.domain)
            and bool(np.array_equal(self.bits, other.bits))
        )

    def __hash__(self) -> int:
        return hash((self.rows, self.cols, self.seed, self.domain, self.bits.tobytes()))


class Measurement(BaseModel):
    """
    Compressed sample vector y.

    matrix_seed is None when the key was discarded at acquisition time.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray
    matrix_seed: Optional[int] = Field(default=None, ge=0, lt=2**64)
    domain: SensingDomain = SensingDomain.WAVELET
    image_id: str = ""

    @field_validator("values", mode="before")
    @classmethod
    def _coerce_values(cls, value):
        array = np.array(value, dtype=np.float64).reshape(-1)
        array.setflags(write=False)
        return array

    @property
    def m(self) -> int:
        return int(self.values.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Measurement):
            return NotImplemented
        return (
            (self.matrix_seed, self.domain, self.image_id) == (other.matrix_seed, other.domain, other.image_id)
            and bool(np.array_equal(self.values, other.values))
        )
