"""
Observability Service - Stage timing and counters for pipeline runs
Aggregates wall time, item counts and failures per stage for the run record
"""

import json
import time
from contextlib import contextmanager
from datetime import datetime
from typing import Any, Dict, Iterator, List, Optional

from app.utils.run_logger import RunLogger


class ObservabilityService:
    """
    Central metrics collector for one pipeline run.

    Features:
    - Per-stage wall time, invocation and item counts
    - Failure tally per stage
    - Optional mirroring of stage boundaries to the run log
    - JSON export for run records
    """

    def __init__(self, logger: Optional[RunLogger] = None):
        """Initialize observability service with empty metrics."""
        self.session_start = datetime.now()
        self.logger = logger
        self.stages: Dict[str, Dict[str, Any]] = {}
        self.failures: List[Dict[str, Any]] = []

    def _stage(self, stage: str) -> Dict[str, Any]:
        return self.stages.setdefault(stage, {
            "calls": 0,
            "seconds": 0.0,
            "items": 0,
            "failures": 0
        })

    @contextmanager
    def track(self, stage: str, items: int = 0, **details) -> Iterator[Dict[str, Any]]:
        """
        Time a block and attribute it to `stage`.

        The yielded dict may be updated with more details (e.g. "items")
        before the block exits.
        """
        context = dict(details, items=items)
        if self.logger is not None:
            self.logger.stage_start(stage, **details)
        start = time.perf_counter()
        try:
            yield context
        finally:
            elapsed = time.perf_counter() - start
            self.record(stage, elapsed, int(context.get("items", 0)))
            if self.logger is not None:
                self.logger.stage_end(stage, elapsed, items=int(context.get("items", 0)))

    def record(self, stage: str, seconds: float, items: int = 0) -> None:
        metrics = self._stage(stage)
        metrics["calls"] += 1
        metrics["seconds"] += seconds
        metrics["items"] += items

    def record_failure(self, stage: str, error: BaseException, **details) -> Dict[str, Any]:
        """
        Count a failure and keep its description.

        Args:
            stage: Stage name
            error: The caught exception
            details: Context such as classifier name and M

        Returns:
            Failure record as stored in the run record
        """
        self._stage(stage)["failures"] += 1
        failure = {"stage": stage, "error_type": type(error).__name__, "message": str(error)}
        failure.update(details)
        self.failures.append(failure)
        if self.logger is not None:
            self.logger.log_failure(stage, error, **details)
        return failure

    def stage_times(self) -> Dict[str, float]:
        return {stage: round(metrics["seconds"], 6) for stage, metrics in sorted(self.stages.items())}

    def get_summary(self) -> Dict[str, Any]:
        """
        Aggregate view for reporting.

        Returns:
            Dictionary with session info, per-stage metrics and failures
        """
        total_seconds = sum(m["seconds"] for m in self.stages.values())
        return {
            "session": {
                "start_time": self.session_start.isoformat(),
                "duration_seconds": (datetime.now() - self.session_start).total_seconds(),
                "tracked_seconds": round(total_seconds, 6),
            },
            "stages": {
                stage: {
                    "calls": m["calls"],
                    "seconds": round(m["seconds"], 6),
                    "items": m["items"],
                    "failures": m["failures"],
                    "seconds_per_item": round(m["seconds"] / m["items"], 6) if m["items"] else 0.0,
                }
                for stage, m in sorted(self.stages.items())
            },
            "failures": list(self.failures),
        }

    def export_metrics(self, filepath: Optional[str] = None) -> str:
        """
        Export all metrics to JSON.

        Args:
            filepath: Optional file path to save metrics

        Returns:
            JSON string of metrics
        """
        json_data = json.dumps(self.get_summary(), indent=2, sort_keys=True)
        if filepath:
            with open(filepath, "w") as f:
                f.write(json_data)
        return json_data
