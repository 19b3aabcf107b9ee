"""Protocol service package."""

from .protocol_repository import ProtocolRepository
from .protocol_service import (
    CommEvent,
    LinkScheduler,
    TriggerMonitor,
    arnl,
    execute_async_event,
    execute_sync_event,
    mwd_combine,
    rnl,
    should_request,
    weight_difference,
)

__all__ = [
    "CommEvent",
    "LinkScheduler",
    "ProtocolRepository",
    "TriggerMonitor",
    "arnl",
    "execute_async_event",
    "execute_sync_event",
    "mwd_combine",
    "rnl",
    "should_request",
    "weight_difference",
]
