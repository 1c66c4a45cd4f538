"""
Classifier Models - Kernel specs, trained models and evaluation reports
"""

from collections import Counter
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.models.image import Label

MODEL_FORMAT = "cspi-model"
MODEL_VERSION = 1


class KernelKind(str, Enum):
    LINEAR = "linear"
    POLYNOMIAL = "polynomial"
    RBF = "rbf"


class KernelSpec(BaseModel):
    """
    SVM kernel.

    Polynomial: (offset + <x, x'> / scale^2) ^ degree
    Rbf: exp(-gamma ||x - x'||^2)
    """
    model_config = ConfigDict(frozen=True)

    kind: KernelKind = KernelKind.LINEAR
    degree: int = Field(default=3, ge=1)
    scale: float = Field(default=1.0, gt=0)
    offset: float = Field(default=1.0, ge=0)
    gamma: float = Field(default=1.0, gt=0)

    @classmethod
    def linear(cls) -> "KernelSpec":
        return cls(kind=KernelKind.LINEAR)

    @classmethod
    def polynomial(cls, degree: int = 3, scale: float = 1.0, offset: float = 1.0) -> "KernelSpec":
        return cls(kind=KernelKind.POLYNOMIAL, degree=degree, scale=scale, offset=offset)

    @classmethod
    def rbf(cls, gamma: float) -> "KernelSpec":
        return cls(kind=KernelKind.RBF, gamma=gamma)

    @property
    def kernel_scale(self) -> float:
        """Length scale used for model-selection tie-breaks."""
        if self.kind is KernelKind.RBF:
            return float(1.0 / np.sqrt(self.gamma))
        if self.kind is KernelKind.POLYNOMIAL:
            return self.scale
        return 1.0


class ClassifierKind(str, Enum):
    """Estimator families"""
    LD = "ld"
    QD = "qd"
    LOGREG = "logreg"
    SVM = "svm"
    SMASHED = "smashed"


class Prediction(BaseModel):
    """One decision: score >= 0 means Bad."""
    model_config = ConfigDict(frozen=True)

    label: Label
    score: float


class TrainedClassifier(BaseModel):
    """
    A fitted estimator plus the roster entry and hyperparameters it came from.

    Attributes:
        name: Roster name (e.g. "cubic_svm")
        kind: Estimator family
        params: Hyperparameters used for the final fit
        n_features: Measurement length M the model accepts
        estimator: Fitted estimator (standardisation statistics included)
        cv_accuracy: Mean fold accuracy of the winning grid point, in percent
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    name: str
    kind: ClassifierKind
    params: Dict[str, Any] = Field(default_factory=dict)
    n_features: int = Field(..., gt=0)
    estimator: Any
    cv_accuracy: Optional[float] = Field(default=None, ge=0, le=100)


class ConfusionMatrix(BaseModel):
    """
    Rows are the true label, columns the prediction, both ordered (good, bad).
    """
    model_config = ConfigDict(frozen=True)

    good_as_good: int = Field(default=0, ge=0)
    good_as_bad: int = Field(default=0, ge=0)
    bad_as_good: int = Field(default=0, ge=0)
    bad_as_bad: int = Field(default=0, ge=0)

    @classmethod
    def from_labels(cls, truth: np.ndarray, predicted: np.ndarray) -> "ConfusionMatrix":
        truth = np.asarray(truth, dtype=int)
        predicted = np.asarray(predicted, dtype=int)
        return cls(
            good_as_good=int(np.sum((truth == 0) & (predicted == 0))),
            good_as_bad=int(np.sum((truth == 0) & (predicted == 1))),
            bad_as_good=int(np.sum((truth == 1) & (predicted == 0))),
            bad_as_bad=int(np.sum((truth == 1) & (predicted == 1))),
        )

    def as_array(self) -> np.ndarray:
        return np.array([[self.good_as_good, self.good_as_bad], [self.bad_as_good, self.bad_as_bad]])

    @property
    def total(self) -> int:
        return self.good_as_good + self.good_as_bad + self.bad_as_good + self.bad_as_bad

    @property
    def trace(self) -> int:
        return self.good_as_good + self.bad_as_bad

    def accuracy(self) -> float:
        return 100.0 * self.trace / self.total if self.total else 0.0


class EvalReport(BaseModel):
    """
    Holdout result for one (classifier, M) cell.

    Invariants: confusion.total equals the test-set size and accuracy
    equals 100 * trace / total.
    """
    model_config = ConfigDict(frozen=True)

    classifier: str
    m: int = Field(..., gt=0)
    test_size: int = Field(..., ge=0)
    accuracy: float = Field(..., ge=0, le=100)
    confusion: ConfusionMatrix
    misclassified: List[str] = Field(default_factory=list)
    misclassified_words: List[str] = Field(default_factory=list)
    char_histogram: Dict[str, int] = Field(default_factory=dict)
    cv_accuracy: Optional[float] = None
    params: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_consistency(self) -> "EvalReport":
        if self.confusion.total != self.test_size:
            raise ValueError(f"confusion total {self.confusion.total} != test size {self.test_size}")
        if abs(self.accuracy - self.confusion.accuracy()) > 1e-9:
            raise ValueError("accuracy disagrees with the confusion matrix trace")
        if len(self.misclassified) != self.test_size - self.confusion.trace:
            raise ValueError("misclassified id count disagrees with the confusion matrix")
        return self


def character_histogram(words: List[str]) -> Dict[str, int]:
    """Letter frequencies over the given words, sorted by letter."""
    counts = Counter("".join(words))
    return dict(sorted(counts.items()))
