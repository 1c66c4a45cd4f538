"""
Dataset Service - Word rendering, print-error injection and corpus persistence
Produces the labelled Good/Bad corpus the rest of the pipeline consumes
"""

import itertools
import json
import re
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pandas.errors import ParserError
from pydantic import ValidationError

from app.models.errors import ErrorKindError, InvalidWordError, ManifestError, MissingImageError
from app.models.image import (
    IMAGE_HEIGHT,
    IMAGE_WIDTH,
    INJECTABLE_KINDS,
    Dataset,
    DatasetManifest,
    ErrorKind,
    GrayImage,
    Label,
    LabeledSample,
)
from app.utils import pgm
from app.utils.config import Settings, get_settings
from app.utils.font import ALPHABET, GLYPH_COLS, GLYPH_ROWS, glyph_mask, has_glyph
from app.utils.run_logger import RunEventType, RunLogger, RunSeverity

GLYPH_SCALE = 4
GLYPH_GAP = 8
INK = 0.0
PAPER = 1.0
MIN_CHANGED_PIXELS = 15
MAX_INJECTION_ATTEMPTS = 64
FULL_WORD_COUNT = len(ALPHABET) ** 3
MANIFEST_COLUMNS = ["image_id", "word", "label", "error", "seed"]


class TextLayout:
    """Fixed placement of three glyphs inside the 35x100 canvas."""

    def __init__(self, height: int = IMAGE_HEIGHT, width: int = IMAGE_WIDTH, scale: int = GLYPH_SCALE, gap: int = GLYPH_GAP):
        self.glyph_height = GLYPH_ROWS * scale
        self.glyph_width = GLYPH_COLS * scale
        total_width = 3 * self.glyph_width + 2 * gap
        if self.glyph_height > height or total_width > width:
            raise ValueError("Glyph layout does not fit the canvas")
        self.top = (height - self.glyph_height) // 2
        self.left = (width - total_width) // 2
        self.gap = gap
        self.scale = scale

    @property
    def bottom(self) -> int:
        return self.top + self.glyph_height

    @property
    def right(self) -> int:
        return self.left + 3 * self.glyph_width + 2 * self.gap

    def glyph_left(self, index: int) -> int:
        return self.left + index * (self.glyph_width + self.gap)


LAYOUT = TextLayout()


def validate_word(word: str) -> str:
    """Reject anything but three uppercase ASCII letters, naming the culprit."""
    if not isinstance(word, str):
        raise InvalidWordError(str(word))
    for character in word:
        if not has_glyph(character):
            raise InvalidWordError(word, character)
    if len(word) != 3:
        raise InvalidWordError(word)
    return word


def render_word(word: str) -> GrayImage:
    """
    Render a 3-letter word as dark glyphs on a light background.

    Args:
        word: Three uppercase ASCII letters

    Returns:
        Deterministic 35x100 GrayImage
    """
    validate_word(word)
    canvas = np.full((IMAGE_HEIGHT, IMAGE_WIDTH), PAPER, dtype=np.float64)
    for index, letter in enumerate(word):
        mask = glyph_mask(letter, LAYOUT.scale)
        left = LAYOUT.glyph_left(index)
        region = canvas[LAYOUT.top:LAYOUT.bottom, left:left + LAYOUT.glyph_width]
        region[mask] = INK
    return GrayImage(pixels=canvas)


def _uniform_int(rng: np.random.Generator, low: int, high: int) -> int:
    """Uniform integer in the closed range [low, high]."""
    return int(rng.integers(low, high + 1))


def _draw_blot(pixels: np.ndarray, rng: np.random.Generator, settings: Settings) -> np.ndarray:
    """One filled dark ellipse centred on an ink pixel inside the text band."""
    out = pixels.copy()
    band = pixels[LAYOUT.top:LAYOUT.bottom, LAYOUT.left:LAYOUT.right]
    ink_rows, ink_cols = np.nonzero(band < 0.5)
    if ink_rows.size:
        pick = int(rng.integers(ink_rows.size))
        cy, cx = ink_rows[pick] + LAYOUT.top, ink_cols[pick] + LAYOUT.left
    else:
        cy = _uniform_int(rng, LAYOUT.top, LAYOUT.bottom - 1)
        cx = _uniform_int(rng, LAYOUT.left, LAYOUT.right - 1)
    semi_x = _uniform_int(rng, settings.blot_axis_min, settings.blot_axis_max)
    semi_y = _uniform_int(rng, settings.blot_axis_min, settings.blot_axis_max)
    rows, cols = np.ogrid[:pixels.shape[0], :pixels.shape[1]]
    inside = ((cols - cx) / semi_x) ** 2 + ((rows - cy) / semi_y) ** 2 <= 1.0
    out[inside] = INK
    return out


def _draw_drag_line(pixels: np.ndarray, rng: np.random.Generator, settings: Settings) -> np.ndarray:
    """Dark horizontal streak 1-3 px thick through the text band."""
    out = pixels.copy()
    width = pixels.shape[1]
    thickness = _uniform_int(rng, settings.drag_thickness_min, settings.drag_thickness_max)
    span = LAYOUT.right - LAYOUT.left
    length = _uniform_int(rng, min(settings.drag_min_length, span), max(settings.drag_min_length, span))
    start = _uniform_int(rng, 0, width - length)
    row = _uniform_int(rng, LAYOUT.top, LAYOUT.bottom - thickness)
    out[row:row + thickness, start:start + length] = INK
    return out


def _draw_slip_line(pixels: np.ndarray, rng: np.random.Generator, settings: Settings) -> np.ndarray:
    """Band of rows shifted sideways; the vacated strip is left paper-white."""
    out = pixels.copy()
    band = _uniform_int(rng, settings.slip_band_min, settings.slip_band_max)
    band = min(band, LAYOUT.glyph_height)
    offset = _uniform_int(rng, settings.slip_offset_min, settings.slip_offset_max)
    direction = 1 if rng.integers(2) == 0 else -1
    row = _uniform_int(rng, LAYOUT.top, LAYOUT.bottom - band)
    rows = slice(row, row + band)
    if direction > 0:
        out[rows, offset:] = pixels[rows, :-offset]
        out[rows, :offset] = PAPER
    else:
        out[rows, :-offset] = pixels[rows, offset:]
        out[rows, -offset:] = PAPER
    return out


_PAINTERS = {
    ErrorKind.BLOT: _draw_blot,
    ErrorKind.DRAG_LINE: _draw_drag_line,
    ErrorKind.SLIP_LINE: _draw_slip_line,
}


def inject_error(img: GrayImage, kind: ErrorKind, seed: int, settings: Optional[Settings] = None) -> GrayImage:
    """
    Paint one simulated print error onto a copy of the image.

    Geometry is redrawn from the same seeded stream until the artifact changes
    at least MIN_CHANGED_PIXELS pixels; if no draw reaches that (e.g. a slip
    over a uniform region) the draw with the largest change is returned.

    Args:
        img: Source image (left untouched)
        kind: Blot, DragLine or SlipLine
        seed: 64-bit injection seed

    Returns:
        New GrayImage carrying the artifact
    """
    kind = ErrorKind(kind)
    if kind is ErrorKind.NONE:
        raise ErrorKindError("Cannot inject ErrorKind.NONE")
    settings = settings or get_settings()
    painter = _PAINTERS[kind]
    rng = np.random.default_rng(int(seed))

    best, best_changed = None, -1
    for _ in range(MAX_INJECTION_ATTEMPTS):
        candidate = painter(img.pixels, rng, settings)
        changed = int(np.count_nonzero(candidate != img.pixels))
        if changed > best_changed:
            best, best_changed = candidate, changed
        if changed >= MIN_CHANGED_PIXELS:
            break
    return GrayImage(pixels=best)


def all_words() -> List[str]:
    """All 26^3 words in lexicographic order."""
    return ["".join(letters) for letters in itertools.product(ALPHABET, repeat=3)]


def parse_scale(scale: Union[str, float, Fraction, None]) -> Fraction:
    """Accept 'full', a fraction string like '1/676', or a number in (0, 1]."""
    if scale is None or (isinstance(scale, str) and scale.strip().lower() == "full"):
        return Fraction(1)
    value = Fraction(scale.strip()) if isinstance(scale, str) else Fraction(scale).limit_denominator(10**9)
    if not 0 < value <= 1:
        raise ValueError(f"scale must be in (0, 1] or 'full', got {scale}")
    return value


def select_words(rng: np.random.Generator, scale: Fraction) -> List[str]:
    """Deterministic subsample of the word list, kept in lexicographic order."""
    words = all_words()
    if scale == 1:
        return words
    count = max(1, int(round(scale * FULL_WORD_COUNT)))
    picks = np.sort(rng.choice(FULL_WORD_COUNT, size=count, replace=False))
    return [words[i] for i in picks]


def good_id(word: str) -> str:
    return f"{word}_good"


def bad_id(word: str) -> str:
    return f"{word}_bad"


def plan_dataset(global_seed: int, scale: Union[str, float, Fraction, None] = "full") -> DatasetManifest:
    """
    Build the manifest without rendering.

    Good entries follow word order; Bad entries get error kinds round-robin
    over a seed-shuffled word order, so kind counts differ by at most 1.
    """
    rng = np.random.default_rng(int(global_seed))
    words = select_words(rng, parse_scale(scale))
    order = rng.permutation(len(words))
    seeds = rng.integers(0, 2**64, size=len(words), dtype=np.uint64)

    entries = [LabeledSample(image_id=good_id(word), word=word, label=Label.GOOD) for word in words]
    for position, index in enumerate(order):
        word = words[int(index)]
        entries.append(LabeledSample(
            image_id=bad_id(word),
            word=word,
            label=Label.BAD,
            error=INJECTABLE_KINDS[position % len(INJECTABLE_KINDS)],
            seed=int(seeds[position])
        ))
    return DatasetManifest(global_seed=int(global_seed), entries=entries)


def render_sample(sample: LabeledSample, settings: Optional[Settings] = None) -> GrayImage:
    """Render one manifest entry (Good = plain word, Bad = word + artifact)."""
    clean = render_word(sample.word)
    if sample.label is Label.GOOD:
        return clean
    return inject_error(clean, sample.error, sample.seed, settings)


def generate_dataset(
    global_seed: int,
    scale: Union[str, float, Fraction, None] = "full",
    workers: int = 1,
    settings: Optional[Settings] = None
) -> Dataset:
    """
    Generate the labelled corpus.

    Args:
        global_seed: 64-bit seed fixing word subsample, shuffle and artifact seeds
        scale: 'full' or a fraction in (0, 1]
        workers: Thread count for rendering

    Returns:
        Dataset (manifest + images)
    """
    settings = settings or get_settings()
    manifest = plan_dataset(global_seed, scale)

    def _render(sample: LabeledSample) -> GrayImage:
        return render_sample(sample, settings)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rendered = list(pool.map(_render, manifest.entries))
    else:
        rendered = [_render(sample) for sample in manifest.entries]

    images = {sample.image_id: image for sample, image in zip(manifest.entries, rendered)}
    return Dataset(manifest=manifest, images=images)


def manifest_frame(manifest: DatasetManifest) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "image_id": entry.image_id,
                "word": entry.word,
                "label": entry.label.value,
                "error": entry.error.value,
                "seed": str(entry.seed),
            }
            for entry in manifest.entries
        ],
        columns=MANIFEST_COLUMNS,
    )


def counts_frame(manifest: DatasetManifest) -> pd.DataFrame:
    rows = []
    for key, count in manifest.counts().items():
        label, error = key.split("/")
        rows.append({"label": label, "error": error, "count": count})
    return pd.DataFrame(rows, columns=["label", "error", "count"])


def write_dataset(dataset: Dataset, directory: Union[str, Path], logger: Optional[RunLogger] = None) -> Path:
    """
    Persist manifest.csv, dataset.json, counts.csv and images/<id>.pgm.

    Returns:
        The dataset directory
    """
    root = Path(directory)
    image_dir = root / "images"
    image_dir.mkdir(parents=True, exist_ok=True)

    for entry in dataset.manifest.entries:
        pgm.write_pgm(image_dir / f"{entry.image_id}.pgm", dataset.images[entry.image_id].pixels)

    manifest_frame(dataset.manifest).to_csv(root / "manifest.csv", index=False, lineterminator="\n")
    counts_frame(dataset.manifest).to_csv(root / "counts.csv", index=False, lineterminator="\n")
    (root / "dataset.json").write_text(json.dumps(
        {"global_seed": dataset.manifest.global_seed, "counts": dataset.manifest.counts()},
        indent=2, sort_keys=True
    ) + "\n")

    if logger is not None:
        minimum, unsound = label_soundness(dataset)
        logger.log_event(RunEventType.DATASET_WRITTEN, "generate", {
            "directory": str(root),
            "entries": len(dataset.manifest.entries),
            "counts": dataset.manifest.counts(),
            "min_changed_pixels": minimum,
            "unsound": unsound
        }, severity=RunSeverity.WARNING if unsound else RunSeverity.INFO)
    return root


def _read_manifest(path: Path) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        row = int(match.group(1)) - 1 if match else 0
        raise ManifestError(row, f"unparseable ({e})") from e
    if list(frame.columns) != MANIFEST_COLUMNS:
        raise ManifestError(0, f"header must be {','.join(MANIFEST_COLUMNS)}, got {','.join(frame.columns)}")
    return frame


def _parse_entry(row_number: int, record: Dict[str, str]) -> LabeledSample:
    try:
        return LabeledSample(
            image_id=record["image_id"],
            word=record["word"],
            label=Label(record["label"]),
            error=ErrorKind(record["error"]),
            seed=int(record["seed"])
        )
    except (ValidationError, ValueError, TypeError) as e:
        raise ManifestError(row_number, str(e).splitlines()[0]) from e


def load_dataset(directory: Union[str, Path]) -> Dataset:
    """
    Load a dataset written by write_dataset.

    Raises:
        ManifestError: malformed manifest row (row numbers are 1-based data rows)
        MissingImageError: manifest entry without image file
    """
    root = Path(directory)
    manifest_path = root / "manifest.csv"
    if not manifest_path.exists():
        raise ManifestError(0, f"manifest not found at {manifest_path}")
    frame = _read_manifest(manifest_path)

    entries = [_parse_entry(number, record) for number, record in enumerate(frame.to_dict("records"), 1)]

    global_seed = 0
    meta_path = root / "dataset.json"
    if meta_path.exists():
        global_seed = int(json.loads(meta_path.read_text())["global_seed"])
    manifest = DatasetManifest(global_seed=global_seed, entries=entries)

    images = {}
    for entry in entries:
        path = root / "images" / f"{entry.image_id}.pgm"
        if not path.exists():
            raise MissingImageError(entry.image_id, str(path))
        images[entry.image_id] = GrayImage(pixels=pgm.read_pgm(path))
    return Dataset(manifest=manifest, images=images)


def changed_pixels(a: GrayImage, b: GrayImage) -> int:
    return int(np.count_nonzero(a.pixels != b.pixels))


def label_soundness(dataset: Dataset) -> Tuple[int, List[str]]:
    """
    Check every Bad image differs from its Good rendering on enough pixels.

    Returns:
        (minimum changed-pixel count over Bad images, ids below threshold)
    """
    minimum, failing = None, []
    for entry in dataset.manifest.entries:
        if entry.label is not Label.BAD:
            continue
        changed = changed_pixels(render_word(entry.word), dataset.images[entry.image_id])
        minimum = changed if minimum is None else min(minimum, changed)
        if changed < MIN_CHANGED_PIXELS:
            failing.append(entry.image_id)
    return (minimum or 0), failing
