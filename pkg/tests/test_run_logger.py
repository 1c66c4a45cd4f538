"""
Unit tests for the hash-chained run log and stage metrics
"""
import json

import pytest

from app.services.observability_service import ObservabilityService
from app.utils.run_logger import RunEventType, RunLogger, RunSeverity


class TestRunLogger:
    """Test suite for structured run events"""

    def test_events_are_chained(self, memory_logger):
        """Test: Each event links to its predecessor's hash"""
        first = memory_logger.stage_start("compress", m=10)
        second = memory_logger.stage_end("compress", 0.5)
        assert first.previous_hash == "0"
        assert second.previous_hash == first.hash
        assert memory_logger.verify_chain_integrity()["intact"]

    def test_file_chain_verifies(self, tmp_path):
        """Test: A flushed log file verifies intact"""
        logger = RunLogger(tmp_path)
        logger.log_event(RunEventType.DATASET_WRITTEN, "generate", {"entries": 52})
        logger.log_failure("train", ValueError("boom"), classifier="qd", m=10)
        report = logger.verify_chain_integrity()
        assert report["total_events"] == 2
        assert report["intact"]

    def test_tampering_detected(self, tmp_path):
        """Test: Editing a stored event breaks the chain"""
        logger = RunLogger(tmp_path)
        logger.log_event(RunEventType.EVALUATION, "evaluate", {"accuracy": 90.0})
        logger.log_event(RunEventType.EVALUATION, "evaluate", {"accuracy": 80.0})
        logger.flush()
        lines = logger.log_file.read_text().splitlines()
        event = json.loads(lines[0])
        event["details"]["accuracy"] = 99.0
        lines[0] = json.dumps(event)
        logger.log_file.write_text("\n".join(lines) + "\n")
        report = logger.verify_chain_integrity()
        assert not report["intact"]
        assert report["broken_chains"][0]["reason"] == "Hash mismatch"

    def test_new_logger_continues_chain(self, tmp_path):
        """Test: A second logger on the same directory appends to the chain"""
        first = RunLogger(tmp_path)
        first.stage_start("generate")
        first.flush()
        second = RunLogger(tmp_path)
        event = second.stage_start("compress")
        assert event.previous_hash == first.last_hash
        assert event.event_id == "RUN-000002"
        assert second.verify_chain_integrity()["intact"]

    def test_query_by_type_and_severity(self, memory_logger):
        """Test: Events filter by type, stage and severity"""
        memory_logger.stage_start("audit")
        memory_logger.log_nonconvergence("recovery", m=10)
        warnings = memory_logger.query_events(severity=RunSeverity.WARNING)
        assert [e.event_type for e in warnings] == [RunEventType.SOLVER_NONCONVERGENCE]
        assert len(memory_logger.query_events(stage="audit")) == 1

    def test_verbose_echo(self, capsys):
        """Test: Verbose loggers print info events"""
        RunLogger(verbose=True).stage_start("train", m=20)
        assert "train" in capsys.readouterr().out


class TestObservabilityService:
    """Test suite for stage timing and failure tallies"""

    def test_track_records_time_and_items(self, memory_logger):
        """Test: A tracked block adds a call, seconds and items"""
        observability = ObservabilityService(memory_logger)
        with observability.track("compress", items=3) as ctx:
            ctx["items"] = 7
        summary = observability.get_summary()["stages"]["compress"]
        assert summary["calls"] == 1
        assert summary["items"] == 7
        assert summary["seconds"] >= 0.0
        assert [e.event_type for e in memory_logger.events] == [RunEventType.STAGE_START, RunEventType.STAGE_END]

    def test_track_times_failing_block(self):
        """Test: Time is recorded even when the block raises"""
        observability = ObservabilityService()
        with pytest.raises(RuntimeError):
            with observability.track("train"):
                raise RuntimeError("bad fold")
        assert observability.stages["train"]["calls"] == 1

    def test_record_failure(self, memory_logger):
        """Test: Failures are kept with their context and logged"""
        observability = ObservabilityService(memory_logger)
        failure = observability.record_failure("train", ValueError("singular"), classifier="qd", m=10)
        assert failure == {"stage": "train", "error_type": "ValueError", "message": "singular",
                           "classifier": "qd", "m": 10}
        assert observability.get_summary()["stages"]["train"]["failures"] == 1
        assert len(memory_logger.query_events(event_type=RunEventType.FAILURE)) == 1

    def test_export_metrics(self, tmp_path):
        """Test: Metrics export to a JSON file"""
        observability = ObservabilityService()
        observability.record("audit", 1.5, items=3)
        path = tmp_path / "metrics.json"
        exported = json.loads(observability.export_metrics(str(path)))
        assert exported["stages"]["audit"]["seconds_per_item"] == 0.5
        assert json.loads(path.read_text()) == exported
