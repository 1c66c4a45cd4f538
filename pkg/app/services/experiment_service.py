"""
Experiment Service - Orchestrates dataset, acquisition, classification and audit
Every stage writes its artifacts under the run's output directory
"""

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from app.models.classifier import EvalReport, TrainedClassifier, character_histogram
from app.models.errors import MissingImageError, SplitOverlapError
from app.models.experiment import (
    REFERENCE_M,
    AuditCell,
    AuditReport,
    DataSplit,
    ExperimentConfig,
    MisclassReport,
    RunRecord,
)
from app.models.image import IMAGE_HEIGHT, IMAGE_WIDTH, INJECTABLE_KINDS, Dataset, DatasetManifest, Label, LabeledSample
from app.models.sensing import SensingMatrix
from app.router import ClassifierRouter
from app.services import classifier_service, dataset_service, recovery_service, sensing_service
from app.services.observability_service import ObservabilityService
from app.utils import metrics, pgm
from app.utils.config import get_settings
from app.utils.run_logger import RunEventType, RunLogger

DECOY_COUNT = 5
ACCURACY_FORMAT = "%.6f"


class RunPaths:
    """Artifact locations inside one output directory."""

    def __init__(self, root):
        self.root = Path(root)

    @property
    def dataset(self) -> Path:
        return self.root / "dataset"

    @property
    def measurements(self) -> Path:
        return self.root / "measurements"

    @property
    def models(self) -> Path:
        return self.root / "models"

    @property
    def results(self) -> Path:
        return self.root / "results"

    @property
    def audit(self) -> Path:
        return self.root / "audit"

    @property
    def logs(self) -> Path:
        return self.root / "logs"

    @property
    def split(self) -> Path:
        return self.root / "split.json"

    @property
    def run_record(self) -> Path:
        return self.root / "run_record.json"

    @property
    def metrics(self) -> Path:
        return self.root / "metrics.json"

    def archive(self, m: int) -> Path:
        return self.measurements / f"m{m:04d}.csv"

    def model(self, name: str, m: int) -> Path:
        return self.models / f"{name}_m{m:04d}.json"


def ratio_pct(m: int) -> float:
    """M as a percentage of the image's pixel count."""
    return sensing_service.compression_ratio(m, IMAGE_HEIGHT * IMAGE_WIDTH)


def matrix_seed(global_seed: int, m: int) -> int:
    return sensing_service.derive_seed(global_seed, "sensing", m)


def sensing_matrix(cfg: ExperimentConfig, m: int) -> SensingMatrix:
    """The run's key for measurement count m."""
    return sensing_service.gen_sensing_matrix(m, cfg.n, matrix_seed(cfg.global_seed, m), cfg.domain)


# Dataset and split

def load_or_generate(cfg: ExperimentConfig, logger: Optional[RunLogger] = None) -> Dataset:
    """Reuse cfg.dataset_dir when it holds a manifest; otherwise generate and write one."""
    if cfg.dataset_dir and (Path(cfg.dataset_dir) / "manifest.csv").exists():
        return dataset_service.load_dataset(cfg.dataset_dir)
    dataset = dataset_service.generate_dataset(cfg.global_seed, cfg.scale_fraction(), workers=cfg.workers)
    target = Path(cfg.dataset_dir) if cfg.dataset_dir else RunPaths(cfg.output_dir).dataset
    dataset_service.write_dataset(dataset, target, logger)
    return dataset


def split_dataset(manifest: DatasetManifest, train_per_label: int, test_per_label: int, seed: int) -> DataSplit:
    """
    Stratified seeded holdout split.

    Each label's entries are shuffled independently; the first
    train_per_label go to training and the next test_per_label to test.
    """
    rng = np.random.default_rng(seed)
    train_ids: List[str] = []
    test_ids: List[str] = []
    for label in (Label.GOOD, Label.BAD):
        entries = manifest.by_label(label)
        if train_per_label + test_per_label > len(entries):
            raise ValueError(
                f"{label.value}: train {train_per_label} + test {test_per_label} exceeds {len(entries)} images"
            )
        order = rng.permutation(len(entries))
        train_ids += [entries[i].image_id for i in order[:train_per_label]]
        test_ids += [entries[i].image_id for i in order[train_per_label:train_per_label + test_per_label]]
    split = DataSplit(seed=seed, train_ids=train_ids, test_ids=test_ids)
    check_split(split)
    return split


def check_split(split: DataSplit) -> None:
    overlap = split.overlap()
    if overlap:
        raise SplitOverlapError(overlap)


def config_split(cfg: ExperimentConfig, manifest: DatasetManifest) -> DataSplit:
    train, test = cfg.split_sizes()
    return split_dataset(manifest, train, test, sensing_service.derive_seed(cfg.global_seed, "split"))


# Acquisition

def compress_stage(
    cfg: ExperimentConfig,
    dataset: Dataset,
    image_ids: Optional[Sequence[str]] = None,
    keep_key: bool = True,
    logger: Optional[RunLogger] = None
) -> Dict[int, sensing_service.MeasurementArchive]:
    """Measure every image (or the given ids) at every M and write one archive per M."""
    paths = RunPaths(cfg.output_dir)
    image_ids = list(image_ids) if image_ids is not None else dataset.manifest.ids()
    labels = {entry.image_id: entry.label for entry in dataset.manifest.entries}
    archives = {}
    for m in cfg.m_list:
        matrix = sensing_matrix(cfg, m)
        if logger is not None:
            logger.log_event(RunEventType.MATRIX_GENERATED, "compress", {
                "m": m, "n": matrix.cols, "domain": matrix.domain.value,
                "seed": matrix.seed if keep_key else None,
            })
        archive = sensing_service.acquire(
            matrix, dataset.images, labels, image_ids, cfg.levels, keep_key, cfg.workers, logger
        )
        archive.write(paths.archive(m))
        archives[m] = archive
    return archives


def load_archives(cfg: ExperimentConfig) -> Dict[int, sensing_service.MeasurementArchive]:
    paths = RunPaths(cfg.output_dir)
    archives = {}
    for m in cfg.m_list:
        path = paths.archive(m)
        if not path.exists():
            raise FileNotFoundError(f"no measurement archive for M={m} at {path}")
        archives[m] = sensing_service.MeasurementArchive.read(path)
    return archives


# Classification

def train_stage(
    cfg: ExperimentConfig,
    archives: Dict[int, sensing_service.MeasurementArchive],
    split: DataSplit,
    router: Optional[ClassifierRouter] = None,
    logger: Optional[RunLogger] = None,
    observability: Optional[ObservabilityService] = None
) -> Dict[Tuple[str, int], TrainedClassifier]:
    """
    Cross-validate and fit every (classifier, M); save each model.

    A failing classifier is recorded and skipped; the others still run.
    """
    router = router or ClassifierRouter()
    observability = observability or ObservabilityService(logger)
    check_split(split)
    paths = RunPaths(cfg.output_dir)
    models = {}
    for m in cfg.m_list:
        X_train, y_train = archives[m].rows_for(split.train_ids)
        for name in cfg.classifiers:
            try:
                with observability.track("train", items=1, classifier=name, m=m):
                    cv = classifier_service.kfold_cv(
                        name, X_train, y_train, k=cfg.folds,
                        seed=sensing_service.derive_seed(cfg.global_seed, "cv", m),
                        workers=cfg.workers, router=router,
                    )
                    model = classifier_service.train(
                        name, X_train, y_train, cv.best_params, router, cv.cv_accuracy, logger
                    )
                classifier_service.save_model(model, paths.model(name, m))
                models[(name, m)] = model
            except Exception as exc:
                observability.record_failure("train", exc, classifier=name, m=m)
    return models


def evaluate_stage(
    cfg: ExperimentConfig,
    archives: Dict[int, sensing_service.MeasurementArchive],
    split: DataSplit,
    models: Dict[Tuple[str, int], TrainedClassifier],
    manifest: DatasetManifest,
    logger: Optional[RunLogger] = None,
    observability: Optional[ObservabilityService] = None
) -> List[EvalReport]:
    """Holdout reports in (M descending, roster) order."""
    observability = observability or ObservabilityService(logger)
    words = {entry.image_id: entry.word for entry in manifest.entries}
    reports = []
    for m in cfg.m_list:
        X_test, y_test = archives[m].rows_for(split.test_ids)
        for name in cfg.classifiers:
            model = models.get((name, m))
            if model is None:
                continue
            try:
                with observability.track("evaluate", items=len(split.test_ids), classifier=name, m=m):
                    reports.append(classifier_service.evaluate_holdout(
                        model, X_test, y_test, split.test_ids, split.train_ids, words, logger
                    ))
            except Exception as exc:
                observability.record_failure("evaluate", exc, classifier=name, m=m)
    return reports


def load_models(cfg: ExperimentConfig, router: Optional[ClassifierRouter] = None) -> Dict[Tuple[str, int], TrainedClassifier]:
    paths = RunPaths(cfg.output_dir)
    models = {}
    for m in cfg.m_list:
        for name in cfg.classifiers:
            path = paths.model(name, m)
            if path.exists():
                models[(name, m)] = classifier_service.load_model(path, router)
    return models


# Reports

def misclass_report(report: EvalReport, lookup: Dict[str, LabeledSample]) -> MisclassReport:
    """
    Break down one holdout report's errors.

    Counts bad-as-good against good-as-bad, letters over misclassified
    words, and misclassified Bad images per injected error kind.
    """
    words = report.misclassified_words or [lookup[i].word for i in report.misclassified if i in lookup]
    by_kind = {kind.value: 0 for kind in INJECTABLE_KINDS}
    for image_id in report.misclassified:
        entry = lookup.get(image_id)
        if entry is not None and entry.label is Label.BAD:
            by_kind[entry.error.value] += 1
    return MisclassReport(
        classifier=report.classifier,
        m=report.m,
        char_histogram=report.char_histogram or character_histogram(words),
        bad_as_good=report.confusion.bad_as_good,
        good_as_bad=report.confusion.good_as_bad,
        by_error_kind=by_kind,
    )


def accuracy_table(cfg: ExperimentConfig, reports: Sequence[EvalReport]) -> pd.DataFrame:
    """Rows = M (descending), columns = classifiers; failed cells are empty."""
    cells = {(r.classifier, r.m): r.accuracy for r in reports}
    rows = []
    for m in cfg.m_list:
        row = {"M": m, "ratio_pct": ratio_pct(m)}
        for name in cfg.classifiers:
            row[name] = cells.get((name, m), np.nan)
        rows.append(row)
    return pd.DataFrame(rows, columns=["M", "ratio_pct"] + list(cfg.classifiers))


def write_reports(
    cfg: ExperimentConfig,
    reports: Sequence[EvalReport],
    manifest: DatasetManifest
) -> Tuple[Dict[str, str], List[MisclassReport]]:
    """Write the accuracy table and misclassification CSVs; return artifact paths."""
    results = RunPaths(cfg.output_dir).results
    results.mkdir(parents=True, exist_ok=True)
    lookup = manifest.lookup()
    csv_options = {"index": False, "lineterminator": "\n", "float_format": ACCURACY_FORMAT}

    accuracy_table(cfg, reports).to_csv(results / "accuracy_table.csv", **csv_options)

    pd.DataFrame(
        [
            {
                "classifier": r.classifier, "M": r.m,
                "good_as_good": r.confusion.good_as_good, "good_as_bad": r.confusion.good_as_bad,
                "bad_as_good": r.confusion.bad_as_good, "bad_as_bad": r.confusion.bad_as_bad,
                "accuracy": r.accuracy, "cv_accuracy": r.cv_accuracy,
            }
            for r in reports
        ],
        columns=["classifier", "M", "good_as_good", "good_as_bad", "bad_as_good", "bad_as_bad", "accuracy", "cv_accuracy"],
    ).to_csv(results / "confusion.csv", **csv_options)

    pd.DataFrame(
        [
            {
                "classifier": r.classifier, "M": r.m, "image_id": image_id,
                "word": lookup[image_id].word, "label": lookup[image_id].label.value,
                "error": lookup[image_id].error.value,
            }
            for r in reports for image_id in r.misclassified
        ],
        columns=["classifier", "M", "image_id", "word", "label", "error"],
    ).to_csv(results / "misclassified.csv", **csv_options)

    breakdowns = [misclass_report(r, lookup) for r in reports]
    kinds = [kind.value for kind in INJECTABLE_KINDS]
    pd.DataFrame(
        [
            {"classifier": b.classifier, "M": b.m, "bad_as_good": b.bad_as_good,
             "good_as_bad": b.good_as_bad, **b.by_error_kind}
            for b in breakdowns
        ],
        columns=["classifier", "M", "bad_as_good", "good_as_bad"] + kinds,
    ).to_csv(results / "misclassification.csv", **csv_options)

    pd.DataFrame(
        [
            {"classifier": b.classifier, "M": b.m, "character": char, "count": count}
            for b in breakdowns for char, count in b.char_histogram.items()
        ],
        columns=["classifier", "M", "character", "count"],
    ).to_csv(results / "char_histogram.csv", **csv_options)

    artifacts = {
        name: str(results / f"{name}.csv")
        for name in ("accuracy_table", "confusion", "misclassified", "misclassification", "char_histogram")
    }
    return artifacts, breakdowns


# Privacy audit

def _decoys(global_seed: int, image_id: str, word: str) -> List[str]:
    rng = np.random.default_rng(sensing_service.derive_seed(global_seed, "decoy", image_id))
    candidates = [w for w in dataset_service.all_words() if w != word]
    return [candidates[i] for i in rng.choice(len(candidates), size=DECOY_COUNT, replace=False)]


def privacy_audit(
    cfg: ExperimentConfig,
    dataset: Dataset,
    image_ids: Optional[Sequence[str]] = None,
    m_list: Optional[Sequence[int]] = None,
    archives: Optional[Dict[int, sensing_service.MeasurementArchive]] = None,
    logger: Optional[RunLogger] = None,
    observability: Optional[ObservabilityService] = None
) -> AuditReport:
    """
    Best-case reconstruction of sample images at each M with the exact key.

    Args:
        image_ids: Images to attack; cfg.audit_ids when None
        m_list: Measurement counts; cfg.audit_m when None
        archives: Stored measurements to attack instead of re-measuring;
            each archive must still carry its key

    Returns:
        AuditReport; PGMs and audit.csv are written under <output_dir>/audit
    """
    observability = observability or ObservabilityService(logger)
    image_ids = list(cfg.audit_ids if image_ids is None else image_ids)
    m_list = sorted(set(cfg.audit_m if m_list is None else m_list), reverse=True)
    lookup = dataset.manifest.lookup()
    for image_id in image_ids:
        if image_id not in lookup:
            raise MissingImageError(image_id, "dataset manifest")

    paths = RunPaths(cfg.output_dir)
    image_dir = paths.audit / "images"
    image_dir.mkdir(parents=True, exist_ok=True)

    truths = {}
    for image_id in image_ids:
        word = lookup[image_id].word
        truths[image_id] = (
            dataset_service.render_word(word),
            [dataset_service.render_word(w) for w in _decoys(cfg.global_seed, image_id, word)],
        )

    def _cell(job: Tuple[int, str]) -> Tuple[AuditCell, object]:
        m, image_id = job
        if archives is not None and m in archives:
            archive = archives[m]
            seed = archive.require_key()
            matrix = sensing_service.gen_sensing_matrix(m, cfg.n, seed, archive.domain)
            y = archive.measurement(image_id)
        else:
            matrix = sensing_matrix(cfg, m)
            y = sensing_service.measure(matrix, dataset.image(image_id), cfg.levels, image_id)
        reconstruction = recovery_service.recover(matrix, y, cfg.solver, cfg.levels, logger)
        clean, decoys = truths[image_id]
        cell = AuditCell(
            image_id=image_id,
            m=m,
            psnr=metrics.psnr(reconstruction.image, dataset.image(image_id)),
            iterations=reconstruction.solution.iterations,
            converged=reconstruction.converged,
            legible=metrics.is_legible(reconstruction.image, clean, decoys),
            residual=reconstruction.solution.residual,
            seconds=reconstruction.seconds,
        )
        return cell, reconstruction.image

    jobs = [(m, image_id) for m in m_list for image_id in image_ids]
    with observability.track("audit", items=len(jobs)):
        if cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                outcomes = list(pool.map(_cell, jobs))
        else:
            outcomes = [_cell(job) for job in jobs]

    cells = []
    for cell, image in outcomes:
        pgm.write_pgm(image_dir / f"{cell.image_id}_m{cell.m:04d}.pgm", image.pixels)
        cells.append(cell)
        if logger is not None:
            logger.log_event(RunEventType.AUDIT_CELL, "audit", {
                "image_id": cell.image_id, "m": cell.m, "psnr": cell.psnr,
                "converged": cell.converged, "legible": cell.legible,
            })

    report = summarize_audit(cells, cfg.unreadable_psnr)
    audit_frame(cells).to_csv(
        paths.audit / "audit.csv", index=False, lineterminator="\n", float_format=ACCURACY_FORMAT
    )
    return report


def audit_frame(cells: Sequence[AuditCell]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "image_id": c.image_id, "M": c.m, "ratio_pct": ratio_pct(c.m), "psnr": c.psnr,
                "iterations": c.iterations, "converged": c.converged, "legible": c.legible,
            }
            for c in cells
        ],
        columns=["image_id", "M", "ratio_pct", "psnr", "iterations", "converged", "legible"],
    )


def summarize_audit(cells: Sequence[AuditCell], threshold: float) -> AuditReport:
    """Aggregate cells per M and decide PASS."""
    by_m: Dict[int, List[AuditCell]] = {}
    for cell in cells:
        by_m.setdefault(cell.m, []).append(cell)
    mean_psnr = {m: float(np.mean([c.psnr for c in group])) for m, group in sorted(by_m.items(), reverse=True)}
    legible = {m: float(np.mean([c.legible for c in group])) for m, group in sorted(by_m.items(), reverse=True)}
    seconds = {m: float(np.mean([c.seconds for c in group])) for m, group in sorted(by_m.items(), reverse=True)}

    low = [m for m in mean_psnr if m <= 20]
    low_ok = bool(low) and all(mean_psnr[m] < threshold for m in low)
    reference_checked = REFERENCE_M in mean_psnr
    reference_ok = mean_psnr[REFERENCE_M] > threshold if reference_checked else True

    return AuditReport(
        cells=list(cells),
        threshold=threshold,
        mean_psnr=mean_psnr,
        legible_fraction=legible,
        seconds_per_reconstruction=seconds,
        nonconverged=sum(not c.converged for c in cells),
        reference_checked=reference_checked,
        passed=bool(cells) and low_ok and reference_ok,
    )


# Full run

def run_experiment(
    cfg: ExperimentConfig,
    dataset: Optional[Dataset] = None,
    audit: bool = True,
    logger: Optional[RunLogger] = None,
    router: Optional[ClassifierRouter] = None
) -> RunRecord:
    """
    Dataset → measurements → CV + holdout per (classifier, M) → tables → audit.

    One sensing matrix per M derived from the global seed; one split shared
    by every classifier and every M.
    """
    paths = RunPaths(cfg.output_dir)
    paths.root.mkdir(parents=True, exist_ok=True)
    observability = ObservabilityService(logger)
    router = router or ClassifierRouter()

    if dataset is None:
        with observability.track("generate") as ctx:
            dataset = load_or_generate(cfg, logger)
            ctx["items"] = len(dataset.manifest.entries)
    manifest = dataset.manifest

    split = config_split(cfg, manifest)
    split.write(paths.split)

    with observability.track("compress") as ctx:
        archives = compress_stage(cfg, dataset, split.train_ids + split.test_ids, logger=logger)
        ctx["items"] = len(archives) * len(split.train_ids + split.test_ids)

    models = train_stage(cfg, archives, split, router, logger, observability)
    reports = evaluate_stage(cfg, archives, split, models, manifest, logger, observability)
    artifacts, breakdowns = write_reports(cfg, reports, manifest)
    artifacts.update({f"measurements_m{m}": str(paths.archive(m)) for m in cfg.m_list})
    artifacts["split"] = str(paths.split)

    audit_report = None
    if audit and cfg.audit_m:
        audit_ids = list(cfg.audit_ids) or split.test_ids[:cfg.audit_count]
        try:
            audit_report = privacy_audit(cfg, dataset, audit_ids, None, None, logger, observability)
            artifacts["audit"] = str(paths.audit / "audit.csv")
        except Exception as exc:
            observability.record_failure("audit", exc)

    artifacts["metrics"] = str(paths.metrics)
    observability.export_metrics(str(paths.metrics))

    record = RunRecord(
        config=cfg.model_dump(mode="json"),
        settings=get_settings().to_dict(),
        seeds={
            "global_seed": cfg.global_seed,
            "split_seed": split.seed,
            "matrix_seeds": {str(m): matrix_seed(cfg.global_seed, m) for m in cfg.m_list},
        },
        stage_times=observability.stage_times(),
        artifacts=artifacts,
        reports=reports,
        misclassification=breakdowns,
        audit=audit_report,
        failures=observability.failures,
        roster=[router.get_roster_details(name, cfg.m_list[0]) for name in cfg.classifiers],
    )
    record.write(paths.run_record)
    if logger is not None:
        logger.flush()
    return record
