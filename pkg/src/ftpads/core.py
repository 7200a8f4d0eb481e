"""Shared vocabulary: identifiers, messages, failure models, digests."""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass
from typing import NamedTuple

Timestep = int
EntityId = int
LpId = int
Payload = bytes

DIGEST_SIZE = 16


class FtpadsError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(FtpadsError):
    pass


class PlacementError(ConfigError):
    """Instances cannot be placed under the requested constraint."""


class ScheduleError(FtpadsError):
    pass


class DomainError(FtpadsError, ValueError):
    pass


class ConstraintViolation(FtpadsError):
    """Two replicas of one entity ended up on the same LP."""


class InstanceId(NamedTuple):
    entity: EntityId
    replica: int


class MessageKey(NamedTuple):
    """Identity shared by every replicated copy of one logical message."""

    src_entity: EntityId
    dst_entity: EntityId
    send_step: Timestep
    seq: int
    deliver_step: Timestep


class Message(NamedTuple):
    """One physical copy of a logical message.

    Field order is significant: plain tuple comparison sorts copies by
    destination instance, then message identity, then source replica, which
    is the engine's delivery order.
    """

    dst: InstanceId
    key: MessageKey
    src: InstanceId
    seq: int
    send_step: Timestep
    deliver_step: Timestep
    payload: Payload
    digest: bytes

    def with_payload(self, payload: Payload) -> Message:
        return self._replace(payload=payload, digest=digest(payload))


class OutboundSend(NamedTuple):
    """A model's request to send ``payload`` to every replica of ``dst_entity``."""

    dst_entity: EntityId
    payload: Payload
    delay: int = 1


class FaultKind(enum.Enum):
    CRASH = "crash"
    BYZANTINE = "byzantine"


@dataclass(frozen=True)
class FailureModel:
    kind: FaultKind
    tolerated_faults: int = 0

    def __post_init__(self):
        if self.tolerated_faults < 0:
            raise DomainError(f"tolerated_faults must be >= 0, got {self.tolerated_faults}")

    @classmethod
    def crash(cls, faults: int = 0) -> FailureModel:
        return cls(FaultKind.CRASH, faults)

    @classmethod
    def byzantine(cls, faults: int = 0) -> FailureModel:
        return cls(FaultKind.BYZANTINE, faults)

    @property
    def replicas(self) -> int:
        return replication_degree(self)


def replication_degree(model: FailureModel) -> int:
    """Number of instances per entity needed to mask ``tolerated_faults`` LP failures."""
    if model.kind is FaultKind.CRASH:
        return model.tolerated_faults + 1
    return 2 * model.tolerated_faults + 1


def majority_threshold(m: int) -> int:
    """Strict majority of ``m`` replicas, ceil((m + 1) / 2)."""
    if m < 1:
        raise DomainError(f"replication degree must be >= 1, got {m}")
    return (m + 2) // 2


def derive_seed(*parts: object) -> int:
    """Stable 64-bit seed from an arbitrary tuple of ints/strings."""
    text = ":".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "big")


def digest(payload: Payload) -> bytes:
    # BLAKE2b keeps digests stable across processes, unlike hash().
    return hashlib.blake2b(payload, digest_size=DIGEST_SIZE).digest()
