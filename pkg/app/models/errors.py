"""
Error Types - Precondition failures raised across the pipeline
Every error is a ValueError so callers can catch the family in one place
"""

from typing import Optional


class PipelineError(ValueError):
    """Base class for all rejections raised by the pipeline."""


class InvalidWordError(PipelineError):
    """Word contains a character outside [A-Z] or has the wrong length."""

    def __init__(self, word: str, character: Optional[str] = None):
        self.word = word
        self.character = character
        if character is not None:
            message = f"Invalid character {character!r} in word {word!r}"
        else:
            message = f"Word {word!r} must be exactly 3 uppercase letters"
        super().__init__(message)


class ErrorKindError(PipelineError):
    """An error kind that cannot be injected (ErrorKind.NONE)."""


class DimensionMismatchError(PipelineError):
    """Operand shapes do not agree."""


class ManifestError(PipelineError):
    """Malformed dataset manifest row."""

    def __init__(self, row: int, reason: str):
        self.row = row
        super().__init__(f"Manifest row {row}: {reason}")


class MissingImageError(PipelineError):
    """A manifest entry has no image file on disk."""

    def __init__(self, image_id: str, path: str):
        self.image_id = image_id
        super().__init__(f"Missing image for image_id {image_id!r} at {path}")


class SplitOverlapError(PipelineError):
    """Train and test sets share image ids."""

    def __init__(self, overlap: set):
        self.overlap = sorted(overlap)
        preview = ", ".join(self.overlap[:5])
        super().__init__(f"Train/test overlap on {len(self.overlap)} image ids: {preview}")


class ConfigError(PipelineError):
    """Invalid or unknown configuration key."""

    def __init__(self, key: str, reason: str):
        self.key = key
        super().__init__(f"Config key {key!r}: {reason}")


class SingleClassError(PipelineError):
    """Training data holds only one label."""


class NonFiniteFeatureError(PipelineError):
    """Training or prediction input contains NaN or infinity."""


class EmptyGridError(PipelineError):
    """Cross-validation was asked to search an empty grid."""


class KeyUnavailableError(PipelineError):
    """Measurement archive was written without its sensing matrix seed."""


class KeyMismatchError(PipelineError):
    """Measurement was taken with a different sensing matrix."""
