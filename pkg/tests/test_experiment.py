"""
Integration tests for the experiment pipeline
"""
import json

import numpy as np
import pandas as pd
import pytest

from app.models.classifier import ConfusionMatrix, EvalReport
from app.models.errors import KeyUnavailableError, MissingImageError
from app.models.experiment import AuditCell, RunRecord
from app.models.image import Dataset, GrayImage, Label
from app.services import classifier_service, experiment_service
from app.services.experiment_service import RunPaths


@pytest.mark.integration
class TestRunExperiment:
    """Test suite for a complete tiny run"""

    @pytest.fixture
    def record(self, tiny_config, tiny_dataset, memory_logger):
        return experiment_service.run_experiment(tiny_config, tiny_dataset, audit=False, logger=memory_logger)

    def test_one_report_per_cell(self, record, tiny_config):
        """Test: Every (classifier, M) pair has a holdout report"""
        cells = {(r.classifier, r.m) for r in record.reports}
        assert cells == {(name, m) for name in tiny_config.classifiers for m in tiny_config.m_list}
        for report in record.reports:
            assert report.test_size == 20
            assert report.confusion.total == 20

    def test_accuracy_table_layout(self, record, tiny_config):
        """Test: Rows are M descending, columns the roster, ratio over 3500 pixels"""
        table = pd.read_csv(RunPaths(tiny_config.output_dir).results / "accuracy_table.csv")
        assert list(table.columns) == ["M", "ratio_pct", "ld", "lr"]
        assert table["M"].tolist() == [20, 10]
        assert table["ratio_pct"].tolist() == pytest.approx([20 / 35, 10 / 35], abs=1e-6)

    def test_artifacts_written(self, record, tiny_config):
        """Test: Archives, models, reports and the run record exist"""
        paths = RunPaths(tiny_config.output_dir)
        for m in tiny_config.m_list:
            assert paths.archive(m).exists()
            for name in tiny_config.classifiers:
                assert paths.model(name, m).exists()
        for name in ("confusion", "misclassified", "misclassification", "char_histogram"):
            assert (paths.results / f"{name}.csv").exists()
        reloaded = RunRecord.model_validate_json(paths.run_record.read_text())
        assert reloaded.accuracy("ld", 20) == record.accuracy("ld", 20)
        assert record.audit is None

    def test_metrics_and_roster_recorded(self, record, tiny_config):
        """Test: Stage metrics land in metrics.json and the roster is described in the record"""
        paths = RunPaths(tiny_config.output_dir)
        metrics = json.loads(paths.metrics.read_text())
        assert {"compress", "train", "evaluate"} <= set(metrics["stages"])
        assert record.artifacts["metrics"] == str(paths.metrics)
        assert [entry["name"] for entry in record.roster] == tiny_config.classifiers
        assert record.roster[0]["display_name"] == "LD"

    def test_split_is_stratified_and_disjoint(self, record, tiny_config, tiny_dataset):
        """Test: The stored split holds 16+16 train and 10+10 test images, no overlap"""
        split = experiment_service.DataSplit.read(RunPaths(tiny_config.output_dir).split)
        lookup = tiny_dataset.manifest.lookup()
        assert not split.overlap()
        assert sum(lookup[i].label is Label.GOOD for i in split.train_ids) == 16
        assert sum(lookup[i].label is Label.BAD for i in split.test_ids) == 10

    def test_seeds_recorded(self, record, tiny_config):
        """Test: Matrix seeds are derived per M from the global seed"""
        seeds = record.seeds["matrix_seeds"]
        assert seeds["20"] == experiment_service.matrix_seed(tiny_config.global_seed, 20)
        assert seeds["20"] != seeds["10"]

    def test_repeat_run_is_byte_identical(self, record, tiny_config, tiny_dataset, tmp_path):
        """Test: Same seed, same CSV outputs"""
        again = tiny_config.model_copy(update={"output_dir": str(tmp_path / "again")})
        experiment_service.run_experiment(again, tiny_dataset, audit=False)
        first, second = RunPaths(tiny_config.output_dir), RunPaths(again.output_dir)
        for name in ("accuracy_table", "confusion", "misclassified"):
            assert (first.results / f"{name}.csv").read_bytes() == (second.results / f"{name}.csv").read_bytes()
        assert first.archive(10).read_bytes() == second.archive(10).read_bytes()

    def test_failing_classifier_does_not_stop_run(self, tiny_config, tiny_dataset, mocker):
        """Test: One classifier failing leaves the others' results in place"""
        original = classifier_service.kfold_cv

        def flaky(name, *args, **kwargs):
            if name == "lr":
                raise RuntimeError("solver exploded")
            return original(name, *args, **kwargs)

        mocker.patch("app.services.classifier_service.kfold_cv", side_effect=flaky)
        record = experiment_service.run_experiment(tiny_config, tiny_dataset, audit=False)
        assert {r.classifier for r in record.reports} == {"ld"}
        assert len(record.failures) == 2
        assert all(f["classifier"] == "lr" and f["stage"] == "train" for f in record.failures)
        table = experiment_service.accuracy_table(tiny_config, record.reports)
        assert table["lr"].isna().all()


class TestStages:
    """Test suite for individually invoked stages"""

    def test_compress_then_load(self, tiny_config, tiny_dataset):
        """Test: Stored archives reload with the same measurements"""
        archives = experiment_service.compress_stage(tiny_config, tiny_dataset)
        loaded = experiment_service.load_archives(tiny_config)
        for m in tiny_config.m_list:
            assert np.array_equal(archives[m].values, loaded[m].values)
            assert loaded[m].seed == experiment_service.matrix_seed(tiny_config.global_seed, m)

    def test_missing_archive(self, tiny_config):
        """Test: Training before compressing is a clear error"""
        with pytest.raises(FileNotFoundError):
            experiment_service.load_archives(tiny_config)

    def test_saved_models_evaluate_identically(self, tiny_config, tiny_dataset):
        """Test: Models reloaded from disk reproduce the in-memory reports"""
        archives = experiment_service.compress_stage(tiny_config, tiny_dataset)
        split = experiment_service.config_split(tiny_config, tiny_dataset.manifest)
        models = experiment_service.train_stage(tiny_config, archives, split)
        direct = experiment_service.evaluate_stage(tiny_config, archives, split, models, tiny_dataset.manifest)
        reloaded = experiment_service.evaluate_stage(
            tiny_config, archives, split, experiment_service.load_models(tiny_config), tiny_dataset.manifest
        )
        assert [r.accuracy for r in direct] == [r.accuracy for r in reloaded]

    def test_split_too_large(self, tiny_dataset):
        """Test: Asking for more images than a label holds is refused"""
        with pytest.raises(ValueError):
            experiment_service.split_dataset(tiny_dataset.manifest, 20, 10, seed=1)


class TestMisclassReport:
    """Test suite for misclassification breakdowns"""

    def test_breakdown_by_error_kind(self, tiny_dataset):
        """Test: Errors are split by direction and by injected kind"""
        lookup = tiny_dataset.manifest.lookup()
        bad = [e for e in tiny_dataset.manifest.entries if e.label is Label.BAD][:2]
        good = [e for e in tiny_dataset.manifest.entries if e.label is Label.GOOD][:1]
        wrong = [e.image_id for e in bad + good]
        report = EvalReport(
            classifier="ld", m=10, test_size=4, accuracy=25.0,
            confusion=ConfusionMatrix(good_as_good=0, good_as_bad=1, bad_as_good=2, bad_as_bad=1),
            misclassified=wrong,
        )
        breakdown = experiment_service.misclass_report(report, lookup)
        assert breakdown.bad_as_good == 2 and breakdown.good_as_bad == 1
        assert sum(breakdown.by_error_kind.values()) == 2
        assert sum(breakdown.char_histogram.values()) == 9


class TestPrivacyAudit:
    """Test suite for the Basis Pursuit audit"""

    def test_no_images_gives_no_verdict(self, tiny_config, tiny_dataset):
        """Test: Auditing zero images yields an empty, non-passing report"""
        report = experiment_service.privacy_audit(tiny_config, tiny_dataset, image_ids=[])
        assert report.cells == []
        assert not report.passed
        assert (RunPaths(tiny_config.output_dir).audit / "audit.csv").exists()

    def test_unknown_image_rejected(self, tiny_config, tiny_dataset):
        """Test: Ids outside the manifest are reported"""
        with pytest.raises(MissingImageError):
            experiment_service.privacy_audit(tiny_config, tiny_dataset, image_ids=["ZZZ_nope"])

    def test_discarded_key_blocks_audit(self, tiny_config, tiny_dataset):
        """Test: Archives without the key cannot be reconstructed"""
        ids = tiny_dataset.manifest.ids()[:1]
        archives = experiment_service.compress_stage(tiny_config, tiny_dataset, ids, keep_key=False)
        with pytest.raises(KeyUnavailableError):
            experiment_service.privacy_audit(tiny_config, tiny_dataset, ids, archives=archives)

    @pytest.mark.slow
    def test_reference_row_separates_from_low_m(self, tiny_config, tiny_dataset, memory_logger):
        """Test: With the M = 500 row audited, a threshold between it and M <= 20 passes"""
        ids = tiny_dataset.manifest.ids()[:2]
        report = experiment_service.privacy_audit(tiny_config, tiny_dataset, ids, m_list=[500, 20, 10], logger=memory_logger)
        assert len(report.cells) == 6
        assert report.reference_checked
        low = max(report.mean_psnr[20], report.mean_psnr[10])
        assert report.mean_psnr[500] > low
        assert experiment_service.summarize_audit(report.cells, (report.mean_psnr[500] + low) / 2).passed
        images = RunPaths(tiny_config.output_dir).audit / "images"
        assert (images / f"{ids[0]}_m0010.pgm").exists()
        assert (images / f"{ids[0]}_m0500.pgm").exists()
        assert len(memory_logger.query_events(event_type="audit_cell")) == 6

    @pytest.mark.slow
    def test_blank_page_reconstructs_at_small_m(self, tiny_config, tiny_dataset):
        """Test: A blank label is rebuilt with high PSNR from 50 and 100 measurements"""
        image_id = tiny_dataset.manifest.ids()[0]
        blank = Dataset(manifest=tiny_dataset.manifest, images={**tiny_dataset.images, image_id: GrayImage.blank()})
        report = experiment_service.privacy_audit(tiny_config, blank, [image_id], m_list=[100, 50])
        assert report.mean_psnr[100] > 40.0
        assert report.mean_psnr[50] > 40.0

    @pytest.mark.slow
    def test_psnr_rises_with_measurements(self, tiny_config, tiny_dataset):
        """Test: Mean PSNR over ten words climbs along M = 10, 20, 50, 100, 200, 500 and M = 10 stays illegible"""
        ids = [e.image_id for e in tiny_dataset.manifest.by_label(Label.GOOD)][:10]
        report = experiment_service.privacy_audit(tiny_config, tiny_dataset, ids, m_list=[500, 200, 100, 50, 20, 10])
        ascending = [report.mean_psnr[m] for m in (10, 20, 50, 100, 200, 500)]
        assert all(lo < hi for lo, hi in zip(ascending, ascending[1:]))
        assert report.legible_fraction[10] < 0.5

    def test_pass_needs_readable_reference(self):
        """Test: The 500-measurement row must be readable for PASS"""
        cells = [
            AuditCell(image_id="a", m=500, psnr=30.0, iterations=10, converged=True, legible=True),
            AuditCell(image_id="a", m=20, psnr=5.0, iterations=10, converged=True, legible=False),
        ]
        assert experiment_service.summarize_audit(cells, 12.0).passed
        cells[0] = cells[0].model_copy(update={"psnr": 8.0})
        report = experiment_service.summarize_audit(cells, 12.0)
        assert report.reference_checked
        assert not report.passed

    def test_readable_low_m_fails(self):
        """Test: Any M <= 20 with mean PSNR above threshold fails the audit"""
        cells = [AuditCell(image_id="a", m=10, psnr=20.0, iterations=1, converged=False, legible=True)]
        report = experiment_service.summarize_audit(cells, 12.0)
        assert not report.passed
        assert report.nonconverged == 1
