"""Progress events for convergence studies."""

import asyncio
import logging
import time
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

logger = logging.getLogger(__name__)


class EventType(Enum):
    """Events emitted while a study runs."""
    STUDY_STARTED = "study_started"
    ROW_STARTED = "row_started"
    ROW_COMPLETE = "row_complete"
    ROW_FAILED = "row_failed"
    STUDY_COMPLETE = "study_complete"


@dataclass
class Event:
    type: EventType
    data: dict
    timestamp: float


class EventEmitter:
    """
    Fans study events out to listeners and keeps a history.

    Listeners may be plain callables or coroutine functions; a failing
    listener is logged and does not stop the study.
    """

    def __init__(self):
        self.event_history: list[Event] = []
        self.listeners: list[Callable] = []

    def add_listener(self, callback: Callable):
        self.listeners.append(callback)

    async def emit(self, event_type: EventType, data: dict):
        event = Event(type=event_type, data=data, timestamp=time.time())
        self.event_history.append(event)

        for listener in self.listeners:
            try:
                if asyncio.iscoroutinefunction(listener):
                    await listener(event)
                else:
                    listener(event)
            except Exception as e:
                logger.error(f"[EventEmitter] Listener error: {e}")

        logger.debug(f"[Event] {event_type.value}: {data.get('description', '')}")

    async def study_started(self, study_id: str, problem: str, scheme: str, rows: int):
        await self.emit(EventType.STUDY_STARTED, {
            "study_id": study_id,
            "problem": problem,
            "scheme": scheme,
            "rows": rows,
            "description": f"{scheme} on {problem}, {rows} ladder rows",
        })

    async def row_started(self, row_id: str, dx: Optional[float], dt: float):
        await self.emit(EventType.ROW_STARTED, {
            "row_id": row_id,
            "dx": dx,
            "dt": dt,
            "description": f"dt={dt:.6g}" + ("" if dx is None else f", dx={dx:.6g}"),
        })

    async def row_complete(self, row_id: str, err_l1: float, err_max: float, wall_ms: float):
        await self.emit(EventType.ROW_COMPLETE, {
            "row_id": row_id,
            "err_l1": err_l1,
            "err_max": err_max,
            "wall_ms": wall_ms,
            "description": f"{row_id} err_max={err_max:.4e} ({wall_ms:.0f}ms)",
        })

    async def row_failed(self, row_id: str, error: str):
        await self.emit(EventType.ROW_FAILED, {
            "row_id": row_id,
            "error": error,
            "description": f"{row_id} failed: {error[:100]}",
        })

    async def study_complete(self, study_id: str, duration_ms: float, failed_rows: list[str]):
        await self.emit(EventType.STUDY_COMPLETE, {
            "study_id": study_id,
            "duration_ms": duration_ms,
            "failed_rows": failed_rows,
            "description": f"Study finished in {duration_ms:.0f}ms, {len(failed_rows)} failed rows",
        })

    def get_history(self) -> list[dict]:
        return [
            {"type": e.type.value, "timestamp": e.timestamp, **e.data}
            for e in self.event_history
        ]
