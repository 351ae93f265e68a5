"""Discrete-event model of a shared-medium wireless chain."""

from .link import Delivered, LinkModel, Lost, Topology, expected_attempts, transmit_frame
from .scenario import ScenarioError, ScenarioResult, run_scenario, validate
from .sim import (
    DELIVERED,
    DROPPED,
    ENQUEUED,
    LOST,
    SENT,
    TRACE_COLUMNS,
    EventTrace,
    Frame,
    OsQueue,
    Outage,
    Simulator,
)
from .transports import (
    PERFLOW_UNRELIABLE,
    POUND,
    RELIABLE_ORDERED,
    RELIABLE_ORDERED_NAGLE,
    TRANSPORTS,
    FlowHandle,
    Network,
    PoundNode,
    TransportParams,
)

__all__ = [
    "DELIVERED", "DROPPED", "ENQUEUED", "LOST", "SENT", "TRACE_COLUMNS",
    "Delivered", "EventTrace", "FlowHandle", "Frame", "LinkModel", "Lost", "Network",
    "OsQueue", "Outage", "PERFLOW_UNRELIABLE", "POUND", "PoundNode", "RELIABLE_ORDERED",
    "RELIABLE_ORDERED_NAGLE", "ScenarioError", "ScenarioResult", "Simulator", "TRANSPORTS",
    "Topology", "TransportParams", "expected_attempts", "run_scenario", "transmit_frame",
    "validate",
]
