"""
Classifier Router - Roster names to estimators and hyperparameter grids
Routes each roster entry to its estimator family and model-selection grid
"""

from typing import Any, Dict, List, Optional, Tuple

from app.estimators import (
    LinearDiscriminant,
    LogisticRegression,
    MeasurementClassifier,
    QuadraticDiscriminant,
    SmashedFilter,
    SupportVectorMachine,
)
from app.models.classifier import ClassifierKind, KernelSpec
from app.models.errors import ConfigError
from app.utils.config import get_settings

DEFAULT_ROSTER = ["gaussian_svm", "cubic_svm", "qd", "lr", "ld"]
OPTIONAL_ROSTER = ["smashed"]

SVM_C_GRID = [0.1, 1.0, 10.0]
RBF_GAMMA_GRID = [0.01, 0.1, 1.0]  # divided by M
POLY_SCALE_GRID = [0.1, 1.0, 10.0]
LOGREG_LAMBDA_GRID = [1e-4, 1e-2, 1.0]
DISCRIMINANT_RIDGE = 1e-6

DISPLAY_NAMES = {
    "gaussian_svm": "Gaussian SVM",
    "cubic_svm": "Cubic SVM",
    "qd": "QD",
    "lr": "LR",
    "ld": "LD",
    "smashed": "Smashed filter",
}


class ClassifierRouter:
    """
    Resolves roster names to estimator factories.

    Roster:
    1. gaussian_svm → SVM with RBF kernel, gamma grid scaled by 1/M
    2. cubic_svm → SVM with degree-3 polynomial kernel, scale grid
    3. qd → quadratic discriminant
    4. lr → ridge logistic regression, lambda grid
    5. ld → linear discriminant
    6. smashed → nearest-neighbour baseline (opt-in)
    """

    def __init__(self):
        """Initialize router with SVM settings from the environment."""
        settings = get_settings()
        self.cache_rows = settings.svm_cache_rows
        self.svm_eps = settings.svm_eps

    @staticmethod
    def names() -> List[str]:
        return DEFAULT_ROSTER + OPTIONAL_ROSTER

    def resolve(self, name: str) -> ClassifierKind:
        """
        Map a roster name to its estimator family.

        Raises:
            ConfigError: Unknown roster name
        """
        kinds = {
            "gaussian_svm": ClassifierKind.SVM,
            "cubic_svm": ClassifierKind.SVM,
            "qd": ClassifierKind.QD,
            "lr": ClassifierKind.LOGREG,
            "ld": ClassifierKind.LD,
            "smashed": ClassifierKind.SMASHED,
        }
        if name not in kinds:
            raise ConfigError("classifiers", f"unknown classifier {name!r}; choose from {', '.join(self.names())}")
        return kinds[name]

    def grid(self, name: str, m: int) -> List[Dict[str, Any]]:
        """
        Hyperparameter grid for one roster entry at measurement count m.

        Args:
            name: Roster name
            m: Feature dimension (number of measurements)

        Returns:
            List of estimator keyword dictionaries
        """
        self.resolve(name)
        if name == "gaussian_svm":
            return [
                {"C": c, "kernel": KernelSpec.rbf(gamma / m)}
                for gamma in RBF_GAMMA_GRID for c in SVM_C_GRID
            ]
        if name == "cubic_svm":
            return [
                {"C": c, "kernel": KernelSpec.polynomial(degree=3, scale=scale, offset=1.0)}
                for scale in POLY_SCALE_GRID for c in SVM_C_GRID
            ]
        if name == "lr":
            return [{"lam": lam} for lam in LOGREG_LAMBDA_GRID]
        if name in ("qd", "ld"):
            return [{"ridge": DISCRIMINANT_RIDGE}]
        return [{"n_neighbors": 1}]

    def build(self, name: str, params: Optional[Dict[str, Any]] = None) -> MeasurementClassifier:
        """Fresh, unfitted estimator for a roster entry."""
        params = dict(params or {})
        kind = self.resolve(name)
        if kind is ClassifierKind.SVM:
            params.setdefault("cache_rows", self.cache_rows)
            params.setdefault("eps", self.svm_eps)
            return SupportVectorMachine(**params)
        if kind is ClassifierKind.LOGREG:
            return LogisticRegression(**params)
        if kind is ClassifierKind.QD:
            return QuadraticDiscriminant(**params)
        if kind is ClassifierKind.LD:
            return LinearDiscriminant(**params)
        return SmashedFilter(**params)

    @staticmethod
    def simplicity_key(params: Dict[str, Any]) -> Tuple[float, float]:
        """
        Sort key preferring the simpler model on CV ties:
        smaller kernel scale first, then stronger regularisation.
        """
        kernel = params.get("kernel")
        scale = kernel.kernel_scale if isinstance(kernel, KernelSpec) else 0.0
        if "C" in params:
            regularisation = 1.0 / float(params["C"])
        elif "lam" in params:
            regularisation = float(params["lam"])
        else:
            regularisation = float(params.get("ridge", 0.0))
        return scale, -regularisation

    def get_roster_details(self, name: str, m: int) -> dict:
        """
        Describe a roster entry for run records.

        Returns:
            Dictionary with family, display name and grid size
        """
        return {
            "name": name,
            "display_name": DISPLAY_NAMES[name],
            "kind": self.resolve(name).value,
            "grid_size": len(self.grid(name, m)),
        }
