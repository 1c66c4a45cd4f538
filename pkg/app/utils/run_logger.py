"""
Run Logger - Hash-chained structured event log for pipeline runs
Every stage, artifact and anomaly is appended as one JSON line
"""

import hashlib
import json
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Union


class RunEventType(str, Enum):
    """Types of run events."""
    STAGE_START = "stage_start"
    STAGE_END = "stage_end"
    DATASET_WRITTEN = "dataset_written"
    MATRIX_GENERATED = "matrix_generated"
    MEASUREMENT_BATCH = "measurement_batch"
    MODEL_TRAINED = "model_trained"
    EVALUATION = "evaluation"
    AUDIT_CELL = "audit_cell"
    SOLVER_NONCONVERGENCE = "solver_nonconvergence"
    FAILURE = "failure"


class RunSeverity(str, Enum):
    """Run event severity levels."""
    DEBUG = "debug"
    INFO = "info"
    WARNING = "warning"
    ERROR = "error"


class RunEvent:
    """Single run event with a hash linking it to its predecessor."""

    def __init__(
        self,
        sequence: int,
        event_type: RunEventType,
        severity: RunSeverity,
        stage: str,
        details: Dict[str, Any],
        previous_hash: str = "0",
        timestamp: Optional[str] = None
    ):
        self.sequence = sequence
        self.event_id = f"RUN-{sequence:06d}"
        self.timestamp = timestamp or datetime.now(timezone.utc).isoformat()
        self.event_type = RunEventType(event_type)
        self.severity = RunSeverity(severity)
        self.stage = stage
        self.details = details
        self.previous_hash = previous_hash
        self.hash = self._calculate_hash()

    def _calculate_hash(self) -> str:
        """Calculate SHA-256 over the canonical JSON form."""
        data = {
            "event_id": self.event_id,
            "timestamp": self.timestamp,
            "event_type": self.event_type.value,
            "severity": self.severity.value,
            "stage": self.stage,
            "details": self.details,
            "previous_hash": self.previous_hash
        }
        json_str = json.dumps(data, sort_keys=True, default=str)
        return hashlib.sha256(json_str.encode()).hexdigest()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "event_id": self.event_id,
            "timestamp": self.timestamp,
            "event_type": self.event_type.value,
            "severity": self.severity.value,
            "stage": self.stage,
            "details": self.details,
            "previous_hash": self.previous_hash,
            "hash": self.hash
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunEvent":
        """Rebuild an event; the stored hash is kept for verification."""
        event = cls(
            sequence=int(data["event_id"].split("-")[-1]),
            event_type=data["event_type"],
            severity=data["severity"],
            stage=data["stage"],
            details=data["details"],
            previous_hash=data["previous_hash"],
            timestamp=data["timestamp"]
        )
        event.hash = data["hash"]
        return event


class RunLogger:
    """
    Structured, tamper-evident run log.

    Features:
    - JSON-lines file per run directory (`logs/run_<date>.jsonl`)
    - SHA-256 hash chain for integrity verification
    - In-memory mode when no directory is given (tests, library use)
    - Query by event type, stage and severity
    """

    def __init__(self, log_dir: Optional[Union[str, Path]] = None, verbose: bool = False):
        """
        Initialize run logger.

        Args:
            log_dir: Directory for the JSONL file; None keeps events in memory only
            verbose: Echo info-and-above events to stdout
        """
        self.verbose = verbose
        self.log_dir = Path(log_dir) if log_dir is not None else None
        self.log_file: Optional[Path] = None
        if self.log_dir is not None:
            self.log_dir.mkdir(parents=True, exist_ok=True)
            date_str = datetime.now().strftime("%Y%m%d")
            self.log_file = self.log_dir / f"run_{date_str}.jsonl"

        self.events: List[RunEvent] = []
        self.events_buffer: List[RunEvent] = []
        self.buffer_size = 100
        self.last_hash = "0"
        self._load_last_hash()

    def _load_last_hash(self) -> None:
        """Continue the chain of an existing log file."""
        if self.log_file is None or not self.log_file.exists():
            return
        lines = self.log_file.read_text().splitlines()
        if lines:
            last_event = json.loads(lines[-1])
            self.last_hash = last_event["hash"]
            self._sequence_offset = len(lines)

    @property
    def _next_sequence(self) -> int:
        return getattr(self, "_sequence_offset", 0) + len(self.events) + 1

    def log_event(
        self,
        event_type: RunEventType,
        stage: str,
        details: Optional[Dict[str, Any]] = None,
        severity: RunSeverity = RunSeverity.INFO
    ) -> RunEvent:
        """
        Append one event.

        Args:
            event_type: Type of event
            stage: Pipeline stage name (generate, compress, train, ...)
            details: JSON-serialisable payload
            severity: Event severity

        Returns:
            The created RunEvent
        """
        event = RunEvent(
            sequence=self._next_sequence,
            event_type=event_type,
            severity=severity,
            stage=stage,
            details=details or {},
            previous_hash=self.last_hash
        )
        self.last_hash = event.hash
        self.events.append(event)
        self.events_buffer.append(event)

        if self.verbose and event.severity is not RunSeverity.DEBUG:
            print(f"[{event.severity.value}] {stage}: {event.event_type.value} {event.details}")

        if len(self.events_buffer) >= self.buffer_size:
            self.flush()
        return event

    def stage_start(self, stage: str, **details) -> RunEvent:
        return self.log_event(RunEventType.STAGE_START, stage, details)

    def stage_end(self, stage: str, seconds: float, **details) -> RunEvent:
        details["seconds"] = round(seconds, 6)
        return self.log_event(RunEventType.STAGE_END, stage, details)

    def log_failure(self, stage: str, error: BaseException, **details) -> RunEvent:
        """Record a caught failure without aborting the run."""
        details.update({"error_type": type(error).__name__, "message": str(error)})
        return self.log_event(RunEventType.FAILURE, stage, details, severity=RunSeverity.ERROR)

    def log_nonconvergence(self, stage: str, **details) -> RunEvent:
        return self.log_event(
            RunEventType.SOLVER_NONCONVERGENCE, stage, details, severity=RunSeverity.WARNING
        )

    def flush(self) -> None:
        """Write buffered events to disk."""
        if self.log_file is None or not self.events_buffer:
            self.events_buffer = []
            return
        with open(self.log_file, "a") as f:
            for event in self.events_buffer:
                f.write(json.dumps(event.to_dict(), default=str) + "\n")
        self.events_buffer = []

    def query_events(
        self,
        event_type: Optional[RunEventType] = None,
        stage: Optional[str] = None,
        severity: Optional[RunSeverity] = None
    ) -> List[RunEvent]:
        """Filter events recorded by this logger instance."""
        results = []
        for event in self.events:
            if event_type is not None and event.event_type is not RunEventType(event_type):
                continue
            if stage is not None and event.stage != stage:
                continue
            if severity is not None and event.severity is not RunSeverity(severity):
                continue
            results.append(event)
        return results

    def verify_chain_integrity(self) -> Dict[str, Any]:
        """
        Verify the on-disk chain (or the in-memory one when no file is used).

        Returns:
            Verification report with broken links listed
        """
        self.flush()
        if self.log_file is not None and self.log_file.exists():
            records = [json.loads(line) for line in self.log_file.read_text().splitlines() if line]
        else:
            records = [event.to_dict() for event in self.events]

        broken = []
        previous_hash = "0"
        for line_num, data in enumerate(records, 1):
            if data["previous_hash"] != previous_hash:
                broken.append({"line": line_num, "event_id": data["event_id"], "reason": "Broken link"})
            if RunEvent.from_dict(data)._calculate_hash() != data["hash"]:
                broken.append({"line": line_num, "event_id": data["event_id"], "reason": "Hash mismatch"})
            previous_hash = data["hash"]

        return {
            "total_events": len(records),
            "broken_chains": broken,
            "intact": not broken
        }
