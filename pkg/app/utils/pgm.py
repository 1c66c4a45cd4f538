"""
PGM Codec - Binary (P5) portable graymap read/write
8-bit only; intensities in [0, 1] map to bytes by round(i * 255)
"""

from pathlib import Path
from typing import Tuple, Union

import numpy as np

MAXVAL = 255


def quantize(pixels: np.ndarray) -> np.ndarray:
    """Map [0, 1] intensities to uint8 bytes."""
    return np.clip(np.round(np.asarray(pixels, dtype=np.float64) * MAXVAL), 0, MAXVAL).astype(np.uint8)


def dequantize(data: np.ndarray) -> np.ndarray:
    """Map uint8 bytes back to [0, 1] intensities."""
    return np.asarray(data, dtype=np.float64) / MAXVAL


def encode_pgm(pixels: np.ndarray) -> bytes:
    """Encode a 2-D [0, 1] array as P5 bytes."""
    data = quantize(pixels)
    height, width = data.shape
    header = f"P5\n{width} {height}\n{MAXVAL}\n".encode("ascii")
    return header + data.tobytes()


def _read_token(buffer: bytes, position: int) -> Tuple[bytes, int]:
    """Read one whitespace-delimited header token, skipping # comments."""
    length = len(buffer)
    while position < length:
        char = buffer[position:position + 1]
        if char == b"#":
            newline = buffer.find(b"\n", position)
            position = length if newline < 0 else newline + 1
        elif char.isspace():
            position += 1
        else:
            break
    start = position
    while position < length and not buffer[position:position + 1].isspace():
        position += 1
    if start == position:
        raise ValueError("Truncated PGM header")
    return buffer[start:position], position


def decode_pgm(buffer: bytes) -> np.ndarray:
    """
    Decode P5 bytes.

    Returns:
        2-D array of [0, 1] intensities (height, width)
    """
    magic, position = _read_token(buffer, 0)
    if magic != b"P5":
        raise ValueError(f"Unsupported PGM magic {magic!r}, expected b'P5'")
    width_token, position = _read_token(buffer, position)
    height_token, position = _read_token(buffer, position)
    maxval_token, position = _read_token(buffer, position)
    width, height, maxval = int(width_token), int(height_token), int(maxval_token)
    if maxval != MAXVAL:
        raise ValueError(f"Unsupported PGM maxval {maxval}, expected {MAXVAL}")

    # Exactly one whitespace byte separates header and raster
    position += 1
    raster = buffer[position:position + width * height]
    if len(raster) != width * height:
        raise ValueError(f"PGM raster has {len(raster)} bytes, expected {width * height}")
    data = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return dequantize(data)


def write_pgm(path: Union[str, Path], pixels: np.ndarray) -> None:
    Path(path).write_bytes(encode_pgm(pixels))


def read_pgm(path: Union[str, Path]) -> np.ndarray:
    return decode_pgm(Path(path).read_bytes())
