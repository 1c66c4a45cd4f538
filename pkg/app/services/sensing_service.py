"""
Sensing Service - Key generation and compressed acquisition
Both the pixel-domain (hardware) and wavelet-domain (experiment) paths
"""

import hashlib
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from app.models.errors import DimensionMismatchError, KeyUnavailableError
from app.models.image import GrayImage, Label
from app.models.sensing import Measurement, SensingDomain, SensingMatrix
from app.models.wavelet import DEFAULT_LEVELS
from app.services import wavelet_service
from app.utils.run_logger import RunEventType, RunLogger

HEADER_PREFIX = "# "


def derive_seed(global_seed: int, *parts) -> int:
    """Stable 64-bit child seed from a global seed and a label path."""
    text = ":".join([str(int(global_seed))] + [str(part) for part in parts])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


def gen_sensing_matrix(m: int, n: int, seed: int, domain: SensingDomain = SensingDomain.WAVELET) -> SensingMatrix:
    """
    Draw an i.i.d. Bernoulli(1/2) {0, 1} matrix.

    Args:
        m: Number of measurements (rows)
        n: Signal length (columns)
        seed: 64-bit seed; same (m, n, seed) gives the same matrix bit for bit

    Raises:
        ValueError: m >= n (the measurements would no longer compress)
    """
    if m <= 0:
        raise ValueError(f"M must be positive, got {m}")
    if m >= n:
        raise ValueError(f"M ({m}) must be smaller than N ({n})")
    rng = np.random.default_rng(int(seed))
    entries = rng.integers(0, 2, size=(m, n), dtype=np.uint8)
    return SensingMatrix(rows=m, cols=n, bits=np.packbits(entries, axis=1), seed=int(seed), domain=SensingDomain(domain))


def wavelet_length(height: int, width: int) -> int:
    padded_h, padded_w = wavelet_service.padded_shape(height, width)
    return padded_h * padded_w


def signal_for(matrix: SensingMatrix, img: GrayImage, levels: int) -> np.ndarray:
    """The vector the matrix multiplies: vec(x) or dwt2(pad(x))."""
    if matrix.domain is SensingDomain.PIXEL:
        signal = img.vector()
    else:
        signal = wavelet_service.image_coeffs(img, levels).coeffs
    if signal.size != matrix.cols:
        raise DimensionMismatchError(
            f"{matrix.domain.value} matrix has {matrix.cols} columns, signal has {signal.size} entries"
        )
    return signal


def measure_pixels(matrix: SensingMatrix, img: GrayImage, image_id: str = "", keep_key: bool = True) -> Measurement:
    """
    y = phi vec(x), the hardware acquisition model.
    """
    if matrix.domain is not SensingDomain.PIXEL:
        raise DimensionMismatchError("measure_pixels needs a pixel-domain matrix")
    values = matrix.dense() @ signal_for(matrix, img, levels=1)
    return Measurement(values=values, matrix_seed=matrix.seed if keep_key else None,
                       domain=SensingDomain.PIXEL, image_id=image_id)


def measure_coeffs(matrix: SensingMatrix, img: GrayImage, levels: int = DEFAULT_LEVELS, image_id: str = "", keep_key: bool = True) -> Measurement:
    """
    y = phi dwt2(pad(x)), the canonical experiment path.
    """
    if matrix.domain is not SensingDomain.WAVELET:
        raise DimensionMismatchError("measure_coeffs needs a wavelet-domain matrix")
    values = matrix.dense() @ signal_for(matrix, img, levels)
    return Measurement(values=values, matrix_seed=matrix.seed if keep_key else None,
                       domain=SensingDomain.WAVELET, image_id=image_id)


def measure(matrix: SensingMatrix, img: GrayImage, levels: int = DEFAULT_LEVELS, image_id: str = "", keep_key: bool = True) -> Measurement:
    """Dispatch on the matrix domain."""
    if matrix.domain is SensingDomain.PIXEL:
        return measure_pixels(matrix, img, image_id, keep_key)
    return measure_coeffs(matrix, img, levels, image_id, keep_key)


def measure_batch(
    matrix: SensingMatrix,
    images: Sequence[GrayImage],
    levels: int = DEFAULT_LEVELS,
    workers: int = 1
) -> np.ndarray:
    """
    Measure many images at once.

    Returns:
        Array of shape (len(images), M); row i is the measurement of images[i]
    """
    if not images:
        return np.zeros((0, matrix.rows))

    def _signal(img: GrayImage) -> np.ndarray:
        return signal_for(matrix, img, levels)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            signals = list(pool.map(_signal, images))
    else:
        signals = [_signal(img) for img in images]
    return np.vstack(signals) @ matrix.dense().T


def compression_ratio(m: int, n: int) -> float:
    """M / N in percent."""
    return 100.0 * m / n


class MeasurementArchive:
    """
    Measurements of many images under one key.

    Attributes:
        m: Measurement count
        seed: Key seed, or None when the key was discarded
        domain: Pixel or Wavelet
        levels: Wavelet depth used for the wavelet path
        image_ids: Row order
        labels: 0 = good, 1 = bad per row
        values: (rows, m) measurement matrix
    """

    def __init__(
        self,
        m: int,
        seed: Optional[int],
        domain: SensingDomain,
        levels: int,
        image_ids: List[str],
        labels: List[int],
        values: np.ndarray
    ):
        values = np.asarray(values, dtype=np.float64).reshape(len(image_ids), m)
        if len(labels) != len(image_ids):
            raise DimensionMismatchError("labels and image_ids differ in length")
        self.m = m
        self.seed = seed
        self.domain = SensingDomain(domain)
        self.levels = levels
        self.image_ids = list(image_ids)
        self.labels = [int(label) for label in labels]
        self.values = values

    def measurement(self, image_id: str) -> Measurement:
        row = self.image_ids.index(image_id)
        return Measurement(values=self.values[row], matrix_seed=self.seed, domain=self.domain, image_id=image_id)

    def rows_for(self, image_ids: Sequence[str]) -> Tuple[np.ndarray, np.ndarray]:
        """(features, labels) for the given ids, in the given order."""
        index = {image_id: row for row, image_id in enumerate(self.image_ids)}
        rows = [index[image_id] for image_id in image_ids]
        return self.values[rows], np.asarray(self.labels)[rows]

    def header(self) -> str:
        seed = "none" if self.seed is None else str(self.seed)
        return f"{HEADER_PREFIX}m={self.m} seed={seed} domain={self.domain.value} levels={self.levels}"

    def to_frame(self) -> pd.DataFrame:
        columns = {"image_id": self.image_ids, "label": self.labels}
        for j in range(self.m):
            columns[f"y{j}"] = self.values[:, j]
        return pd.DataFrame(columns)

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            f.write(self.header() + "\n")
            self.to_frame().to_csv(f, index=False, float_format="%.17g", lineterminator="\n")
        return path

    @classmethod
    def read(cls, path: Union[str, Path]) -> "MeasurementArchive":
        path = Path(path)
        with open(path) as f:
            first = f.readline().strip()
        if not first.startswith(HEADER_PREFIX.strip()):
            raise ValueError(f"{path}: missing archive header line")
        meta = dict(item.split("=", 1) for item in first.lstrip("# ").split())
        frame = pd.read_csv(path, skiprows=1, dtype={"image_id": str}, float_precision="round_trip")
        m = int(meta["m"])
        value_columns = [f"y{j}" for j in range(m)]
        return cls(
            m=m,
            seed=None if meta["seed"] == "none" else int(meta["seed"]),
            domain=SensingDomain(meta["domain"]),
            levels=int(meta.get("levels", 3)),
            image_ids=frame["image_id"].tolist(),
            labels=frame["label"].astype(int).tolist(),
            values=frame[value_columns].to_numpy(dtype=np.float64),
        )

    def require_key(self) -> int:
        if self.seed is None:
            raise KeyUnavailableError("Archive was acquired with --discard-key; no reconstruction possible")
        return self.seed


def acquire(
    matrix: SensingMatrix,
    images: Dict[str, GrayImage],
    labels: Dict[str, Label],
    image_ids: Sequence[str],
    levels: int = DEFAULT_LEVELS,
    keep_key: bool = True,
    workers: int = 1,
    logger: Optional[RunLogger] = None
) -> MeasurementArchive:
    """Measure the listed images into an archive."""
    values = measure_batch(matrix, [images[i] for i in image_ids], levels, workers)
    archive = MeasurementArchive(
        m=matrix.rows,
        seed=matrix.seed if keep_key else None,
        domain=matrix.domain,
        levels=levels,
        image_ids=list(image_ids),
        labels=[labels[i].code for i in image_ids],
        values=values,
    )
    if logger is not None:
        logger.log_event(RunEventType.MEASUREMENT_BATCH, "compress", {
            "m": matrix.rows,
            "n": matrix.cols,
            "images": len(image_ids),
            "domain": matrix.domain.value,
            "key_kept": keep_key
        })
    return archive
