"""
Compressive Print Inspection - Command-line interface
generate, compress, train, evaluate, audit and run-all over one output directory
"""

import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from app.models.experiment import DataSplit, ExperimentConfig
from app.services import dataset_service, experiment_service
from app.services.experiment_service import RunPaths
from app.services.observability_service import ObservabilityService
from app.utils.config import get_settings
from app.utils.run_logger import RunLogger


class StageError(Exception):
    """Wraps any failure with the stage it happened in."""

    def __init__(self, stage: str, error: BaseException):
        self.stage = stage
        self.error = error
        super().__init__(f"stage {stage} failed: {error}")


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", default="runs/default", help="Output directory for all artifacts")
    parser.add_argument("--seed", type=int, default=None, help="64-bit global seed")
    parser.add_argument("--data", default=None, help="Dataset directory (default: <out>/dataset)")
    parser.add_argument("--full", action="store_true", help="Full 17576-word corpus with 15000/2576 split")
    parser.add_argument("--verbose", action="store_true", help="Print stage progress")
    parser.add_argument("--workers", type=int, default=None, help="Parallel fan-out inside stages")
    parser.add_argument("--scale", default=None, help="'desk', 'full' or a fraction of the 17576 words")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cspi",
        description="Privacy-preserving print-error classification from compressed measurements",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    generate = commands.add_parser("generate", help="Synthesize the labelled image corpus")
    _common(generate)

    compress = commands.add_parser("compress", help="Acquire random binary measurements")
    _common(compress)
    compress.add_argument("--m", required=True, help="Comma-separated measurement counts")
    compress.add_argument("--domain", choices=["wavelet", "pixel"], default=None)
    compress.add_argument("--discard-key", action="store_true", help="Do not record the matrix seed")

    train = commands.add_parser("train", help="Cross-validate and fit classifiers")
    _common(train)
    train.add_argument("--m", default=None, help="Comma-separated measurement counts")
    train.add_argument("--classifiers", default=None, help="Comma-separated roster names")
    train.add_argument("--folds", type=int, default=None)

    evaluate = commands.add_parser("evaluate", help="Holdout evaluation and reports")
    _common(evaluate)
    evaluate.add_argument("--m", default=None, help="Comma-separated measurement counts")
    evaluate.add_argument("--classifiers", default=None, help="Comma-separated roster names")

    audit = commands.add_parser("audit", help="Basis Pursuit privacy audit")
    _common(audit)
    audit.add_argument("--ids", default=None, help="Comma-separated image ids")
    audit.add_argument("--m", default=None, help="Comma-separated measurement counts")
    audit.add_argument("--from-archives", action="store_true",
                       help="Attack the stored measurement archives instead of re-measuring")

    run_all = commands.add_parser("run-all", help="Full experiment from a config file")
    _common(run_all)
    run_all.add_argument("--config", default=None, help="Flat KEY=value experiment file")
    run_all.add_argument("--no-audit", action="store_true")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Command-line values that override the config file and defaults."""
    values = {
        "output_dir": args.out,
        "global_seed": args.seed,
        "dataset_dir": args.data,
        "workers": args.workers,
        "m_list": getattr(args, "m", None),
        "classifiers": getattr(args, "classifiers", None),
        "folds": getattr(args, "folds", None),
        "domain": getattr(args, "domain", None),
        "scale": "full" if args.full else args.scale,
    }
    if args.command == "audit":
        values["audit_m"] = values.pop("m_list")
        values["audit_ids"] = args.ids
    return {key: value for key, value in values.items() if value is not None}


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    settings = get_settings()
    base: Dict[str, Any] = {"levels": settings.wavelet_levels, "unreadable_psnr": settings.unreadable_psnr,
                            "workers": settings.workers, "tol_abs": settings.bp_tol_abs,
                            "tol_rel": settings.bp_tol_rel, "max_iterations": settings.bp_max_iterations}
    config_path = getattr(args, "config", None)
    if config_path:
        base.update(ExperimentConfig.read_file(config_path))
    return ExperimentConfig.from_mapping({**base, **_overrides(args)})


def _dataset(cfg: ExperimentConfig):
    directory = Path(cfg.dataset_dir) if cfg.dataset_dir else RunPaths(cfg.output_dir).dataset
    return dataset_service.load_dataset(directory)


def _split(cfg: ExperimentConfig, manifest) -> DataSplit:
    paths = RunPaths(cfg.output_dir)
    if paths.split.exists():
        return DataSplit.read(paths.split)
    split = experiment_service.config_split(cfg, manifest)
    split.write(paths.split)
    return split


def _run_stage(stage: str, action, *args, **kwargs):
    try:
        return action(*args, **kwargs)
    except Exception as exc:
        raise StageError(stage, exc) from exc


def cmd_generate(cfg: ExperimentConfig, logger: RunLogger) -> None:
    target = Path(cfg.dataset_dir) if cfg.dataset_dir else RunPaths(cfg.output_dir).dataset
    dataset = dataset_service.generate_dataset(cfg.global_seed, cfg.scale_fraction(), workers=cfg.workers)
    dataset_service.write_dataset(dataset, target, logger)
    print(f"wrote {len(dataset.manifest.entries)} images to {target}")


def cmd_compress(cfg: ExperimentConfig, logger: RunLogger, discard_key: bool) -> None:
    dataset = _dataset(cfg)
    archives = experiment_service.compress_stage(cfg, dataset, keep_key=not discard_key, logger=logger)
    for m in archives:
        print(f"M={m}: {RunPaths(cfg.output_dir).archive(m)}")


def cmd_train(cfg: ExperimentConfig, logger: RunLogger) -> int:
    dataset = _dataset(cfg)
    archives = experiment_service.load_archives(cfg)
    split = _split(cfg, dataset.manifest)
    observability = ObservabilityService(logger)
    models = experiment_service.train_stage(cfg, archives, split, logger=logger, observability=observability)
    for failure in observability.failures:
        print(f"stage train failed for {failure['classifier']} at M={failure['m']}: {failure['message']}",
              file=sys.stderr)
    print(f"trained {len(models)} models into {RunPaths(cfg.output_dir).models}")
    return 1 if observability.failures and not models else 0


def cmd_evaluate(cfg: ExperimentConfig, logger: RunLogger) -> None:
    dataset = _dataset(cfg)
    archives = experiment_service.load_archives(cfg)
    split = _split(cfg, dataset.manifest)
    models = experiment_service.load_models(cfg)
    reports = experiment_service.evaluate_stage(cfg, archives, split, models, dataset.manifest, logger)
    experiment_service.write_reports(cfg, reports, dataset.manifest)
    print(experiment_service.accuracy_table(cfg, reports).to_string(index=False))


def cmd_audit(cfg: ExperimentConfig, logger: RunLogger, from_archives: bool) -> None:
    dataset = _dataset(cfg)
    archives = None
    if from_archives:
        archives = experiment_service.load_archives(cfg.model_copy(update={"m_list": cfg.audit_m}))
    report = experiment_service.privacy_audit(cfg, dataset, archives=archives, logger=logger)
    for m, value in report.mean_psnr.items():
        print(f"M={m}: mean PSNR {value:.3f} dB, legible {report.legible_fraction[m]:.2f}")
    if report.cells:
        print("PASS" if report.passed else "FAIL")


def cmd_run_all(cfg: ExperimentConfig, logger: RunLogger, audit: bool) -> None:
    record = experiment_service.run_experiment(cfg, audit=audit, logger=logger)
    print(experiment_service.accuracy_table(cfg, record.reports).to_string(index=False))
    for failure in record.failures:
        print(f"stage {failure['stage']} failed: {failure['message']}", file=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _run_stage(args.command, build_config, args)
        logger = RunLogger(RunPaths(cfg.output_dir).logs, verbose=args.verbose)
        status = 0
        if args.command == "generate":
            _run_stage("generate", cmd_generate, cfg, logger)
        elif args.command == "compress":
            _run_stage("compress", cmd_compress, cfg, logger, args.discard_key)
        elif args.command == "train":
            status = _run_stage("train", cmd_train, cfg, logger)
        elif args.command == "evaluate":
            _run_stage("evaluate", cmd_evaluate, cfg, logger)
        elif args.command == "audit":
            _run_stage("audit", cmd_audit, cfg, logger, args.from_archives)
        else:
            _run_stage("run-all", cmd_run_all, cfg, logger, not args.no_audit)
        logger.flush()
        return status
    except StageError as exc:
        print(str(exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
