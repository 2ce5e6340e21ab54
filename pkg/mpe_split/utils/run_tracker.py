"""Lineage ids and wall-clock timing for convergence studies."""

import logging
import time
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

logger = logging.getLogger(__name__)


class RunKind(Enum):
    STUDY = "STUDY"
    ROW = "ROW"


@dataclass
class RunNode:
    """One ladder row (or the study itself)."""
    run_id: str
    kind: RunKind
    parent_id: Optional[str]
    started: Optional[float]
    description: str = ""
    status: str = "pending"  # pending, running, completed, failed
    wall_ms: Optional[float] = None
    error: Optional[str] = None


@dataclass
class StudySession:
    study_id: str
    started: float
    nodes: dict = field(default_factory=dict)
    order: list = field(default_factory=list)
    status: str = "active"


class RunTracker:
    """
    Assigns ids to a study and its ladder rows and records their durations.

    Study ids carry the unix time (``STUDY-1702345678``), rows a counter
    (``ROW-001``). Durations use the monotonic performance counter.
    """

    def __init__(self):
        self.sessions: dict[str, StudySession] = {}
        self.counters: dict[str, int] = defaultdict(int)
        self.current_study: Optional[str] = None

    def start_study(self, description: str = "") -> str:
        study_id = self._generate_id(RunKind.STUDY)
        started = time.perf_counter()
        session = StudySession(study_id=study_id, started=started)
        session.nodes[study_id] = RunNode(
            run_id=study_id,
            kind=RunKind.STUDY,
            parent_id=None,
            started=started,
            description=description,
            status="running",
        )
        session.order.append(study_id)
        self.sessions[study_id] = session
        self.current_study = study_id
        logger.info(f"[RunTracker] Study started: {study_id} ({description})")
        return study_id

    def register_row(self, description: str = "") -> str:
        """Assign the next row id of the current study. The clock starts in ``start_row``."""
        if not self.current_study:
            raise ValueError("No active study. Call start_study first.")
        session = self.sessions[self.current_study]
        row_id = self._generate_id(RunKind.ROW)
        session.nodes[row_id] = RunNode(
            run_id=row_id,
            kind=RunKind.ROW,
            parent_id=self.current_study,
            started=None,
            description=description,
        )
        session.order.append(row_id)
        logger.debug(f"[RunTracker] Row registered: {row_id} ({description})")
        return row_id

    def start_row(self, row_id: str):
        node = self._row(row_id)
        node.status = "running"
        node.started = time.perf_counter()

    def complete_row(self, row_id: str, status: str = "completed", error: Optional[str] = None) -> float:
        """
        Stop the clock of a row.

        Returns:
            Elapsed wall time in milliseconds
        """
        node = self._row(row_id)
        if node.started is None:
            raise ValueError(f"row {row_id} was never started")
        node.status = status
        node.error = error
        node.wall_ms = (time.perf_counter() - node.started) * 1000.0
        logger.debug(f"[RunTracker] Row {row_id} {status} in {node.wall_ms:.1f}ms")
        return node.wall_ms

    def end_study(self, status: str = "completed") -> dict:
        """End the current study and return its summary."""
        if not self.current_study:
            return {}
        session = self.sessions[self.current_study]
        session.status = status
        rows = [session.nodes[run_id] for run_id in session.order[1:]]
        summary = {
            "study_id": session.study_id,
            "duration_ms": (time.perf_counter() - session.started) * 1000.0,
            "row_count": len(rows),
            "failed_rows": [node.run_id for node in rows if node.status == "failed"],
            "order": list(session.order),
            "status": status,
        }
        logger.info(f"[RunTracker] Study ended: {session.study_id} ({status})")
        self.current_study = None
        return summary

    def get_node(self, run_id: str) -> Optional[RunNode]:
        if not self.current_study:
            return None
        return self.sessions[self.current_study].nodes.get(run_id)

    def _row(self, row_id: str) -> RunNode:
        node = self.get_node(row_id)
        if node is None:
            raise KeyError(f"unknown row {row_id}")
        return node

    def _generate_id(self, kind: RunKind) -> str:
        if kind == RunKind.STUDY:
            return f"{kind.value}-{int(time.time())}"
        self.counters[kind.value] += 1
        return f"{kind.value}-{self.counters[kind.value]:03d}"
