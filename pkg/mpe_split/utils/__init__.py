"""Study bookkeeping utilities."""

from mpe_split.utils.event_emitter import Event, EventEmitter, EventType
from mpe_split.utils.run_tracker import RunTracker

__all__ = ["Event", "EventEmitter", "EventType", "RunTracker"]
