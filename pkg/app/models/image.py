"""
Image Models - Grayscale rasters and labelled dataset entries
Defines the signal x and the manifest that describes the corpus
"""

import re
from enum import Enum
from typing import Dict, List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

IMAGE_HEIGHT = 35
IMAGE_WIDTH = 100
WORD_PATTERN = re.compile(r"^[A-Z]{3}$")


class ErrorKind(str, Enum):
    """Simulated print-error classes"""
    NONE = "none"
    BLOT = "blot"
    DRAG_LINE = "drag_line"
    SLIP_LINE = "slip_line"


INJECTABLE_KINDS = (ErrorKind.BLOT, ErrorKind.DRAG_LINE, ErrorKind.SLIP_LINE)


class Label(str, Enum):
    """Binary inspection verdict (0 = good, 1 = bad)"""
    GOOD = "good"
    BAD = "bad"

    @property
    def code(self) -> int:
        """Numeric encoding used in measurement archives."""
        return 0 if self is Label.GOOD else 1

    @classmethod
    def from_code(cls, code: int) -> "Label":
        return cls.GOOD if int(code) == 0 else cls.BAD


class GrayImage(BaseModel):
    """
    Grayscale raster with intensities in [0, 1].

    Ink is dark (near 0), paper is light (near 1). Pixels are held as a
    read-only (height, width) float64 array; `vector()` gives the row-major
    flattening used as the signal x.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    pixels: np.ndarray

    @field_validator("pixels", mode="before")
    @classmethod
    def _coerce_pixels(cls, value):
        array = np.array(value, dtype=np.float64)
        if array.ndim != 2:
            raise ValueError(f"pixels must be 2-D, got shape {array.shape}")
        if not np.all(np.isfinite(array)):
            raise ValueError("pixels must be finite")
        if array.size and (array.min() < 0.0 or array.max() > 1.0):
            raise ValueError("pixel intensities must lie in [0, 1]")
        array.setflags(write=False)
        return array

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def size(self) -> int:
        return int(self.pixels.size)

    def vector(self) -> np.ndarray:
        """Row-major flattening of the raster (length width x height)."""
        return self.pixels.reshape(-1)

    def mean(self) -> float:
        return float(self.pixels.mean())

    @classmethod
    def blank(cls, height: int = IMAGE_HEIGHT, width: int = IMAGE_WIDTH, value: float = 1.0) -> "GrayImage":
        """Uniform image, paper-white by default."""
        return cls(pixels=np.full((height, width), value, dtype=np.float64))

    @classmethod
    def from_vector(cls, values: np.ndarray, height: int = IMAGE_HEIGHT, width: int = IMAGE_WIDTH) -> "GrayImage":
        return cls(pixels=np.asarray(values, dtype=np.float64).reshape(height, width))

    def __eq__(self, other) -> bool:
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))

    def __hash__(self) -> int:
        return hash((self.pixels.shape, self.pixels.tobytes()))


class LabeledSample(BaseModel):
    """
    One manifest row.

    Attributes:
        image_id: Stable identifier, also the image file stem
        word: Three uppercase ASCII letters
        label: Good or Bad
        error: Injected error kind (NONE for Good images)
        seed: 64-bit error-injection seed (0 for Good images)
    """
    model_config = ConfigDict(frozen=True)

    image_id: str = Field(..., min_length=1)
    word: str
    label: Label
    error: ErrorKind = ErrorKind.NONE
    seed: int = Field(default=0, ge=0, lt=2**64)

    @field_validator("word")
    @classmethod
    def _check_word(cls, value: str) -> str:
        if not WORD_PATTERN.match(value):
            raise ValueError(f"word {value!r} must match [A-Z]{{3}}")
        return value

    @model_validator(mode="after")
    def _check_label_soundness(self) -> "LabeledSample":
        if (self.label is Label.BAD) != (self.error is not ErrorKind.NONE):
            raise ValueError(
                f"label {self.label.value} inconsistent with error {self.error.value}"
            )
        return self


class DatasetManifest(BaseModel):
    """Corpus description: entries in generation order plus the global seed"""
    model_config = ConfigDict(frozen=True)

    global_seed: int = Field(..., ge=0, lt=2**64)
    entries: List[LabeledSample] = Field(default_factory=list)

    def counts(self) -> Dict[str, int]:
        """Entry counts keyed by "<label>/<error>"."""
        tally: Dict[str, int] = {}
        for entry in self.entries:
            key = f"{entry.label.value}/{entry.error.value}"
            tally[key] = tally.get(key, 0) + 1
        return dict(sorted(tally.items()))

    def error_counts(self) -> Dict[ErrorKind, int]:
        """Counts per injected kind over the Bad set."""
        tally = {kind: 0 for kind in INJECTABLE_KINDS}
        for entry in self.entries:
            if entry.label is Label.BAD:
                tally[entry.error] += 1
        return tally

    def by_label(self, label: Label) -> List[LabeledSample]:
        return [entry for entry in self.entries if entry.label is label]

    def ids(self) -> List[str]:
        return [entry.image_id for entry in self.entries]

    def lookup(self) -> Dict[str, LabeledSample]:
        return {entry.image_id: entry for entry in self.entries}


class Dataset(BaseModel):
    """Manifest together with its rendered images keyed by image_id"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    manifest: DatasetManifest
    images: Dict[str, GrayImage]

    @model_validator(mode="after")
    def _check_images_present(self) -> "Dataset":
        missing = [image_id for image_id in self.manifest.ids() if image_id not in self.images]
        if missing:
            raise ValueError(f"{len(missing)} manifest entries have no image, first: {missing[0]}")
        return self

    def image(self, image_id: str) -> GrayImage:
        return self.images[image_id]
