"""Scripted failure injection: permanent LP crashes and Byzantine LPs."""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

from .core import LpId, Message, ScheduleError, Timestep, digest

if TYPE_CHECKING:
    from .engine import LogicalProcess


class ByzantineMode(enum.Enum):
    CORRUPT_ALL = "corrupt_all"
    CORRUPT_WITH_PROB = "corrupt_with_prob"
    SILENT = "silent"
    GARBAGE = "garbage"


@dataclass(frozen=True)
class ByzantineBehavior:
    mode: ByzantineMode = ByzantineMode.CORRUPT_ALL
    p: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ScheduleError(f"corruption probability must lie in [0, 1], got {self.p}")


class EventKind(enum.Enum):
    CRASH = "crash"
    BYZANTINE = "byzantine"


@dataclass(frozen=True)
class FailureEvent:
    lp: LpId
    step: Timestep
    kind: EventKind = EventKind.CRASH
    behavior: ByzantineBehavior | None = None

    def __post_init__(self):
        if self.lp < 0 or self.step < 0:
            raise ScheduleError(f"negative lp/step in {self}")
        if self.kind is EventKind.BYZANTINE and self.behavior is None:
            object.__setattr__(self, "behavior", ByzantineBehavior())

    @classmethod
    def crash(cls, lp: LpId, step: Timestep) -> FailureEvent:
        return cls(lp, step, EventKind.CRASH)

    @classmethod
    def byzantine(
        cls, lp: LpId, step: Timestep, behavior: ByzantineBehavior | None = None
    ) -> FailureEvent:
        return cls(lp, step, EventKind.BYZANTINE, behavior or ByzantineBehavior())


@dataclass(frozen=True)
class FailureSchedule:
    events: tuple[FailureEvent, ...] = ()

    def __post_init__(self):
        ordered = tuple(sorted(self.events, key=lambda ev: (ev.step, ev.lp)))
        lps = [ev.lp for ev in ordered]
        if len(set(lps)) != len(lps):
            raise ScheduleError("at most one failure event per LP is allowed")
        object.__setattr__(self, "events", ordered)

    def __len__(self) -> int:
        return len(self.events)

    def validate(self, n_lps: int) -> None:
        for ev in self.events:
            if ev.lp >= n_lps:
                raise ScheduleError(f"event targets LP {ev.lp} but only {n_lps} LPs exist")

    def due(self, step: Timestep) -> list[FailureEvent]:
        return [ev for ev in self.events if ev.step == step]

    @property
    def crashes(self) -> int:
        return sum(ev.kind is EventKind.CRASH for ev in self.events)


class LpStatus(enum.Enum):
    RUNNING = "running"
    CRASHED = "crashed"
    BYZANTINE = "byzantine"


def apply_due_events(
    schedule: FailureSchedule,
    step: Timestep,
    lps: Sequence[LogicalProcess],
    barrier=None,
) -> set[LpId]:
    """Transition the LPs whose failure event is due at ``step``.

    A crash discards the LP's inbox and hosted state and removes it from
    ``barrier``; a Byzantine LP keeps running but its outbound traffic is
    passed through :func:`mangle` from now on.
    """
    changed: set[LpId] = set()
    for ev in schedule.due(step):
        lp = lps[ev.lp]
        if lp.status is not LpStatus.RUNNING:
            raise ScheduleError(f"LP {ev.lp} already {lp.status.value} at step {step}")
        if ev.kind is EventKind.CRASH:
            lp.crash()
            if barrier is not None:
                barrier.exclude(ev.lp)
        else:
            lp.turn_byzantine(ev.behavior)
        changed.add(ev.lp)
    return changed


def _xor_corrupt(payload: bytes, rng: random.Random) -> bytes:
    n = len(payload)
    if not n:
        return rng.randbytes(1)
    # nonzero mask bytes guarantee every byte changes
    mask = rng.randbytes(n).replace(b"\x00", b"\x01")
    return (int.from_bytes(payload, "big") ^ int.from_bytes(mask, "big")).to_bytes(n, "big")


def mangle(behavior: ByzantineBehavior, msg: Message, rng: random.Random) -> Message | None:
    """What a Byzantine LP actually emits in place of ``msg``.

    Only payload and digest may change: the sender and message identity are
    authenticated and cannot be forged.
    """
    mode = behavior.mode
    if mode is ByzantineMode.SILENT:
        return None
    if mode is ByzantineMode.CORRUPT_ALL:
        return msg.with_payload(_xor_corrupt(msg.payload, rng))
    if mode is ByzantineMode.CORRUPT_WITH_PROB:
        if rng.random() < behavior.p:
            return msg.with_payload(_xor_corrupt(msg.payload, rng))
        return msg
    garbage = rng.randbytes(rng.randint(1, 32))
    if garbage == msg.payload:
        garbage += b"\x00"
    return msg._replace(payload=garbage, digest=digest(garbage))
