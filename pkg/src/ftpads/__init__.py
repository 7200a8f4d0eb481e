"""Fault-tolerant time-stepped simulation through functional replication."""

from .core import (
    ConfigError,
    DomainError,
    FailureModel,
    FaultKind,
    InstanceId,
    Message,
    MessageKey,
    OutboundSend,
    PlacementError,
    ScheduleError,
    digest,
    majority_threshold,
    replication_degree,
)
from .engine import EntityBehavior, RunReport, SimulationConfig, run
from .faults import ByzantineBehavior, ByzantineMode, FailureEvent, FailureSchedule

__version__ = "0.1.0"

__all__ = [
    "ByzantineBehavior",
    "ByzantineMode",
    "ConfigError",
    "DomainError",
    "EntityBehavior",
    "FailureEvent",
    "FailureModel",
    "FailureSchedule",
    "FaultKind",
    "InstanceId",
    "Message",
    "MessageKey",
    "OutboundSend",
    "PlacementError",
    "RunReport",
    "ScheduleError",
    "SimulationConfig",
    "digest",
    "majority_threshold",
    "replication_degree",
    "run",
]
