"""The priority transport engine: fragmentation, queueing, pacing, reassembly."""

from .messages import (
    DEFAULT_HEADER_OVERHEAD,
    DEFAULT_LINK_RATE_BPS,
    DEFAULT_MTU,
    FlowConfig,
    Message,
    SessionConfig,
    fragment,
)
from .pacing import Pacer, pacing_interval
from .reassembly import IngestResult, InconsistentHeader, Reassembler, Status
from .sender import MonotonicClock, Sender, VirtualClock, run_sender
from .txqueue import EnqueueReport, TxQueue

__all__ = [
    "DEFAULT_HEADER_OVERHEAD",
    "DEFAULT_LINK_RATE_BPS",
    "DEFAULT_MTU",
    "EnqueueReport",
    "FlowConfig",
    "IngestResult",
    "InconsistentHeader",
    "Message",
    "MonotonicClock",
    "Pacer",
    "Reassembler",
    "SessionConfig",
    "Sender",
    "Status",
    "TxQueue",
    "VirtualClock",
    "fragment",
    "pacing_interval",
    "run_sender",
]
