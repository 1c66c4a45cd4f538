"""
Experiment Models - Run configuration, audit results and the run record
"""

import json
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from app.models.classifier import EvalReport
from app.models.errors import ConfigError
from app.models.image import IMAGE_HEIGHT, IMAGE_WIDTH
from app.models.recovery import SolverConfig
from app.models.sensing import SensingDomain
from app.models.wavelet import DEFAULT_LEVELS, PADDED_HEIGHT, PADDED_WIDTH
from app.router import DEFAULT_ROSTER, ClassifierRouter

FULL_WORDS = 26 ** 3
FULL_SPLIT = (15000, 2576)
DESK_SPLIT = (2000, 500)
DEFAULT_M_LIST = [200, 100, 50, 20, 10]
DEFAULT_AUDIT_M = [1000, 500, 200, 100, 50, 20, 10]
REFERENCE_M = 500
SOLVER_KEYS = {"tol_abs", "tol_rel", "max_iterations"}


def signal_length(domain: SensingDomain) -> int:
    """N for a sensing domain."""
    if domain is SensingDomain.PIXEL:
        return IMAGE_HEIGHT * IMAGE_WIDTH
    return PADDED_HEIGHT * PADDED_WIDTH


def _split_list(value: Union[str, List[Any]]) -> List[str]:
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return list(value)


class ExperimentConfig(BaseModel):
    """
    Complete description of one experiment.

    Attributes:
        global_seed: Root of every derived seed (matrices, split, dataset)
        scale: "desk" (2000/500 per label), "full" (15000/2576), or a
            fraction of the 17576 words
        m_list: Measurement counts for classification, reported descending
        train_per_label: Training images per label (derived when omitted)
        test_per_label: Test images per label (derived when omitted)
        classifiers: Roster names
        folds: k for cross-validation
        domain: Wavelet (canonical) or pixel measurement path
        levels: Wavelet decomposition depth
        solver: Basis Pursuit settings for the audit
        audit_ids: Images to reconstruct (first test images when empty)
        audit_count: How many test images to audit when audit_ids is empty
        audit_m: Audit ladder including the 500 reference row
        unreadable_psnr: dB threshold below which a reconstruction counts as unreadable
        output_dir: Where every artifact is written
        dataset_dir: Existing dataset to reuse (generated when missing)
        workers: Parallel fan-out inside stages
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    global_seed: int = Field(default=20240117, ge=0, lt=2**64)
    scale: str = "desk"
    m_list: List[int] = Field(default_factory=lambda: list(DEFAULT_M_LIST), min_length=1)
    train_per_label: Optional[int] = Field(default=None, ge=1)
    test_per_label: Optional[int] = Field(default=None, ge=1)
    classifiers: List[str] = Field(default_factory=lambda: list(DEFAULT_ROSTER), min_length=1)
    folds: int = Field(default=5, ge=2)
    domain: SensingDomain = SensingDomain.WAVELET
    levels: int = Field(default=DEFAULT_LEVELS, ge=1, le=6)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    audit_ids: List[str] = Field(default_factory=list)
    audit_count: int = Field(default=10, ge=0)
    audit_m: List[int] = Field(default_factory=lambda: list(DEFAULT_AUDIT_M))
    unreadable_psnr: float = Field(default=7.0, gt=0)
    output_dir: str = "runs/default"
    dataset_dir: Optional[str] = None
    workers: int = Field(default=1, ge=1)

    @field_validator("m_list", "audit_m", mode="before")
    @classmethod
    def _parse_ints(cls, value):
        return [int(item) for item in _split_list(value)]

    @field_validator("classifiers", "audit_ids", mode="before")
    @classmethod
    def _parse_names(cls, value):
        return _split_list(value)

    @field_validator("m_list", "audit_m")
    @classmethod
    def _sort_descending(cls, value: List[int]) -> List[int]:
        return sorted(set(value), reverse=True)

    @field_validator("classifiers")
    @classmethod
    def _check_roster(cls, value: List[str]) -> List[str]:
        router = ClassifierRouter()
        for name in value:
            router.resolve(name)
        return list(dict.fromkeys(value))

    @model_validator(mode="after")
    def _check_sizes(self) -> "ExperimentConfig":
        n = signal_length(self.domain)
        for key in ("m_list", "audit_m"):
            for m in getattr(self, key):
                if m <= 0 or m >= n:
                    raise ConfigError(key, f"M={m} must satisfy 0 < M < N={n}")
        words = self.word_count()
        train, test = self.split_sizes()
        if train + test > words:
            raise ConfigError(
                "train_per_label", f"train {train} + test {test} exceeds {words} images per label"
            )
        return self

    def scale_fraction(self) -> Fraction:
        if self.scale == "full":
            return Fraction(1)
        if self.scale == "desk":
            return Fraction(sum(DESK_SPLIT), FULL_WORDS)
        try:
            fraction = Fraction(self.scale)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError("scale", f"cannot parse {self.scale!r}") from exc
        if not 0 < fraction <= 1:
            raise ConfigError("scale", f"{self.scale!r} is outside (0, 1]")
        return fraction

    def word_count(self) -> int:
        """Words (hence images per label) in the dataset at this scale."""
        return max(1, round(FULL_WORDS * self.scale_fraction()))

    def split_sizes(self) -> Tuple[int, int]:
        """(train, test) per label; proportional to 15000/2576 unless given."""
        words = self.word_count()
        if self.scale == "desk":
            default_train, default_test = DESK_SPLIT
        else:
            default_train = min(words - 1, max(1, round(words * FULL_SPLIT[0] / FULL_WORDS)))
            default_test = words - default_train
        train = self.train_per_label if self.train_per_label is not None else default_train
        test = self.test_per_label if self.test_per_label is not None else default_test
        return train, test

    @property
    def n(self) -> int:
        return signal_length(self.domain)

    @staticmethod
    def read_file(path: Union[str, Path]) -> Dict[str, Any]:
        """Flat KEY=value file as a dict with lower-cased keys."""
        if not Path(path).exists():
            raise ConfigError("config", f"file not found: {path}")
        return {key.lower(): value for key, value in dotenv_values(path).items()}

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ExperimentConfig":
        """
        Parse a flat KEY=value file.

        Keys are case-insensitive field names; tol_abs, tol_rel and
        max_iterations populate the solver settings.

        Raises:
            ConfigError: Unknown key or invalid value (the key is named)
        """
        return cls.from_mapping(cls.read_file(path))

    @classmethod
    def from_mapping(cls, raw: Dict[str, Any]) -> "ExperimentConfig":
        allowed = set(cls.model_fields) | SOLVER_KEYS
        for key in raw:
            if key not in allowed:
                raise ConfigError(key, "unknown configuration key")
        solver = {key: raw[key] for key in SOLVER_KEYS if key in raw and raw[key] is not None}
        fields = {key: value for key, value in raw.items() if key not in SOLVER_KEYS and value is not None}
        if solver:
            fields["solver"] = SolverConfig(**solver)
        try:
            return cls(**fields)
        except ValidationError as exc:
            first = exc.errors()[0]
            original = first.get("ctx", {}).get("error")
            if isinstance(original, ConfigError):
                raise original from exc
            key = str(first["loc"][0]) if first.get("loc") else "config"
            raise ConfigError(key, first["msg"]) from exc


class DataSplit(BaseModel):
    """Holdout split shared by every classifier and every M of a run."""
    model_config = ConfigDict(frozen=True)

    seed: int = Field(..., ge=0, lt=2**64)
    train_ids: List[str]
    test_ids: List[str]

    def overlap(self) -> set:
        return set(self.train_ids) & set(self.test_ids)

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.model_dump(), indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def read(cls, path: Union[str, Path]) -> "DataSplit":
        return cls(**json.loads(Path(path).read_text()))


class AuditCell(BaseModel):
    """One reconstruction attempt (image, M)."""
    model_config = ConfigDict(frozen=True)

    image_id: str
    m: int = Field(..., gt=0)
    psnr: float
    iterations: int = Field(..., ge=0)
    converged: bool
    legible: bool
    residual: float = Field(default=0.0, ge=0)
    seconds: float = Field(default=0.0, ge=0)


class AuditReport(BaseModel):
    """
    Privacy audit outcome.

    passed is True when mean PSNR at every M <= 20 is under the threshold
    and, when the reference row was run, mean PSNR at M = 500 is above it.
    """
    model_config = ConfigDict(frozen=True)

    cells: List[AuditCell] = Field(default_factory=list)
    threshold: float
    mean_psnr: Dict[int, float] = Field(default_factory=dict)
    legible_fraction: Dict[int, float] = Field(default_factory=dict)
    seconds_per_reconstruction: Dict[int, float] = Field(default_factory=dict)
    nonconverged: int = Field(default=0, ge=0)
    reference_checked: bool = False
    passed: bool = False


class MisclassReport(BaseModel):
    """Misclassification breakdown for one (classifier, M)."""
    model_config = ConfigDict(frozen=True)

    classifier: str
    m: int
    char_histogram: Dict[str, int] = Field(default_factory=dict)
    bad_as_good: int = Field(default=0, ge=0)
    good_as_bad: int = Field(default=0, ge=0)
    by_error_kind: Dict[str, int] = Field(default_factory=dict)


class RunRecord(BaseModel):
    """Everything needed to reproduce and inspect one run."""
    model_config = ConfigDict(frozen=True)

    config: Dict[str, Any]
    settings: Dict[str, Any] = Field(default_factory=dict)
    seeds: Dict[str, Any] = Field(default_factory=dict)
    stage_times: Dict[str, float] = Field(default_factory=dict)
    artifacts: Dict[str, str] = Field(default_factory=dict)
    reports: List[EvalReport] = Field(default_factory=list)
    misclassification: List[MisclassReport] = Field(default_factory=list)
    audit: Optional[AuditReport] = None
    failures: List[Dict[str, Any]] = Field(default_factory=list)
    roster: List[Dict[str, Any]] = Field(default_factory=list)

    def accuracy(self, classifier: str, m: int) -> Optional[float]:
        for report in self.reports:
            if report.classifier == classifier and report.m == m:
                return report.accuracy
        return None

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True)

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json())
        return path
