"""
Classifier Service - Training, model selection and holdout evaluation
Works directly on measurement vectors; never sees pixels
"""

import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from sklearn.model_selection import StratifiedKFold

from app.models.classifier import (
    MODEL_FORMAT,
    MODEL_VERSION,
    ConfusionMatrix,
    EvalReport,
    KernelSpec,
    Prediction,
    TrainedClassifier,
    character_histogram,
)
from app.models.errors import DimensionMismatchError, EmptyGridError, SplitOverlapError
from app.models.image import Label
from app.models.sensing import Measurement
from app.router import ClassifierRouter
from app.utils.run_logger import RunEventType, RunLogger


class CvResult(BaseModel):
    """Outcome of a grid search by stratified k-fold cross-validation."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    best_params: Dict[str, Any]
    cv_accuracy: float = Field(..., ge=0, le=100)
    grid: List[Dict[str, Any]] = Field(default_factory=list)
    mean_accuracies: List[float] = Field(default_factory=list)


def params_to_json(params: Dict[str, Any]) -> Dict[str, Any]:
    """Hyperparameters with KernelSpec values expanded to plain dicts."""
    encoded = {}
    for key, value in sorted(params.items()):
        if isinstance(value, KernelSpec):
            encoded[key] = {"kernel_spec": value.model_dump(mode="json")}
        else:
            encoded[key] = value
    return encoded


def params_from_json(encoded: Dict[str, Any]) -> Dict[str, Any]:
    params = {}
    for key, value in encoded.items():
        if isinstance(value, dict) and "kernel_spec" in value:
            params[key] = KernelSpec(**value["kernel_spec"])
        else:
            params[key] = value
    return params


def _params_key(params: Dict[str, Any]) -> str:
    return json.dumps(params_to_json(params), sort_keys=True)


def dedupe_grid(grid: Sequence[Dict[str, Any]]) -> List[Dict[str, Any]]:
    """Drop repeated grid points, keeping first occurrences in order."""
    seen = set()
    unique = []
    for params in grid:
        key = _params_key(params)
        if key not in seen:
            seen.add(key)
            unique.append(dict(params))
    return unique


def _as_matrix(X) -> np.ndarray:
    if isinstance(X, Measurement):
        return X.values.reshape(1, -1)
    if isinstance(X, (list, tuple)) and X and isinstance(X[0], Measurement):
        return np.vstack([m.values for m in X])
    return np.atleast_2d(np.asarray(X, dtype=np.float64))


def train(
    name: str,
    X,
    y,
    params: Optional[Dict[str, Any]] = None,
    router: Optional[ClassifierRouter] = None,
    cv_accuracy: Optional[float] = None,
    logger: Optional[RunLogger] = None
) -> TrainedClassifier:
    """
    Fit one roster entry.

    Args:
        name: Roster name (gaussian_svm, cubic_svm, qd, lr, ld, smashed)
        X: (n, M) measurement matrix or a list of Measurements
        y: Labels, 0 = good and 1 = bad
        params: Estimator hyperparameters; the first grid point when omitted

    Returns:
        TrainedClassifier wrapping the fitted estimator
    """
    router = router or ClassifierRouter()
    X = _as_matrix(X)
    y = np.asarray(y).astype(int)
    if params is None:
        params = router.grid(name, X.shape[1])[0]
    estimator = router.build(name, params).fit(X, y)
    model = TrainedClassifier(
        name=name,
        kind=router.resolve(name),
        params=dict(params),
        n_features=X.shape[1],
        estimator=estimator,
        cv_accuracy=cv_accuracy,
    )
    if logger is not None:
        logger.log_event(RunEventType.MODEL_TRAINED, "train", {
            "classifier": name,
            "m": X.shape[1],
            "samples": int(X.shape[0]),
            "params": params_to_json(params),
        })
    return model


def predict_batch(model: TrainedClassifier, X) -> Tuple[np.ndarray, np.ndarray]:
    """(labels, scores) for every row; score >= 0 maps to Bad (1)."""
    X = _as_matrix(X)
    if X.shape[1] != model.n_features:
        raise DimensionMismatchError(f"model {model.name} expects M={model.n_features}, got {X.shape[1]}")
    scores = model.estimator.decision_function(X)
    labels = np.where(scores >= 0.0, 1, 0)
    return labels, scores


def predict(model: TrainedClassifier, y: Union[Measurement, np.ndarray]) -> Prediction:
    labels, scores = predict_batch(model, y)
    return Prediction(label=Label.from_code(int(labels[0])), score=float(scores[0]))


def accuracy(truth: np.ndarray, predicted: np.ndarray) -> float:
    truth = np.asarray(truth)
    return 100.0 * float(np.mean(truth == np.asarray(predicted))) if truth.size else 0.0


def kfold_cv(
    name: str,
    X,
    y,
    k: int = 5,
    grid: Optional[Sequence[Dict[str, Any]]] = None,
    seed: int = 0,
    workers: int = 1,
    router: Optional[ClassifierRouter] = None
) -> CvResult:
    """
    Pick hyperparameters by seeded stratified k-fold cross-validation.

    Ties on mean fold accuracy go to the smaller kernel scale, then to the
    stronger regularisation, then to the earlier grid point.

    Raises:
        EmptyGridError: grid is empty
        ValueError: k < 2 or fewer samples than folds
    """
    router = router or ClassifierRouter()
    X = _as_matrix(X)
    y = np.asarray(y).astype(int)
    if grid is None:
        grid = router.grid(name, X.shape[1])
    grid = dedupe_grid(grid)
    if not grid:
        raise EmptyGridError(f"empty hyperparameter grid for {name}")
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if X.shape[0] < k:
        raise ValueError(f"{X.shape[0]} samples cannot be split into {k} folds")

    folds = list(StratifiedKFold(n_splits=k, shuffle=True, random_state=seed % 2**32).split(X, y))
    jobs = [(p, f) for p in range(len(grid)) for f in range(len(folds))]

    def _score(job: Tuple[int, int]) -> float:
        point, fold = job
        train_idx, test_idx = folds[fold]
        estimator = router.build(name, grid[point]).fit(X[train_idx], y[train_idx])
        return accuracy(y[test_idx], estimator.predict(X[test_idx]))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(_score, jobs))
    else:
        scores = [_score(job) for job in jobs]

    table = np.asarray(scores).reshape(len(grid), len(folds))
    means = table.mean(axis=1)
    order = sorted(
        range(len(grid)),
        key=lambda p: (-round(float(means[p]), 9), router.simplicity_key(grid[p]), p),
    )
    best = order[0]
    return CvResult(
        best_params=grid[best],
        cv_accuracy=float(means[best]),
        grid=grid,
        mean_accuracies=[float(v) for v in means],
    )


def evaluate_holdout(
    model: TrainedClassifier,
    X_test,
    y_test,
    test_ids: Sequence[str],
    train_ids: Sequence[str] = (),
    words: Optional[Dict[str, str]] = None,
    logger: Optional[RunLogger] = None
) -> EvalReport:
    """
    Score a trained model on a disjoint test set.

    Args:
        test_ids: image_id per test row
        train_ids: ids the model was trained on (checked for overlap)
        words: image_id → word, for the character histogram

    Raises:
        SplitOverlapError: some test id was used in training
    """
    overlap = set(test_ids) & set(train_ids)
    if overlap:
        raise SplitOverlapError(overlap)
    y_test = np.asarray(y_test).astype(int)
    if len(test_ids) != y_test.size:
        raise DimensionMismatchError("test_ids and labels differ in length")

    if y_test.size:
        predicted, _ = predict_batch(model, X_test)
    else:
        predicted = np.zeros(0, dtype=int)
    confusion = ConfusionMatrix.from_labels(y_test, predicted)
    wrong = [image_id for image_id, t, p in zip(test_ids, y_test, predicted) if t != p]
    wrong_words = [words[i] for i in wrong] if words else []
    report = EvalReport(
        classifier=model.name,
        m=model.n_features,
        test_size=int(y_test.size),
        accuracy=confusion.accuracy(),
        confusion=confusion,
        misclassified=wrong,
        misclassified_words=wrong_words,
        char_histogram=character_histogram(wrong_words),
        cv_accuracy=model.cv_accuracy,
        params=params_to_json(model.params),
    )
    if logger is not None:
        logger.log_event(RunEventType.EVALUATION, "evaluate", {
            "classifier": model.name,
            "m": model.n_features,
            "accuracy": report.accuracy,
            "misclassified": len(wrong),
        })
    return report


def model_to_dict(model: TrainedClassifier) -> Dict[str, Any]:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "name": model.name,
        "kind": model.kind.value,
        "params": params_to_json(model.params),
        "n_features": model.n_features,
        "cv_accuracy": model.cv_accuracy,
        "state": model.estimator.get_state(),
    }


def model_from_dict(data: Dict[str, Any], router: Optional[ClassifierRouter] = None) -> TrainedClassifier:
    if data.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a {MODEL_FORMAT} document")
    if data.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {data.get('version')!r}")
    router = router or ClassifierRouter()
    params = params_from_json(data["params"])
    template = router.build(data["name"], params)
    estimator = type(template).from_state(template.get_params(), data["state"])
    return TrainedClassifier(
        name=data["name"],
        kind=router.resolve(data["name"]),
        params=params,
        n_features=int(data["n_features"]),
        estimator=estimator,
        cv_accuracy=data.get("cv_accuracy"),
    )


def save_model(model: TrainedClassifier, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model_to_dict(model), indent=2, sort_keys=True))
    return path


def load_model(path: Union[str, Path], router: Optional[ClassifierRouter] = None) -> TrainedClassifier:
    return model_from_dict(json.loads(Path(path).read_text()), router)
