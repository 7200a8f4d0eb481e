"""Functional replication: instance placement, M x M fan-out and receiver-side filtering."""

from __future__ import annotations

import enum
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from ._kernels_py import place_from_uniforms
from .core import (
    ConstraintViolation,
    DomainError,
    InstanceId,
    LpId,
    Message,
    MessageKey,
    OutboundSend,
    Payload,
    PlacementError,
    Timestep,
    digest,
)


class PlacementMap:
    """Immutable assignment of every ``InstanceId`` to an LP."""

    __slots__ = ("n_entities", "m", "n_lps", "_flat", "_ids")

    def __init__(self, n_entities: int, m: int, n_lps: int, flat: Iterable[int]):
        self.n_entities = n_entities
        self.m = m
        self.n_lps = n_lps
        self._flat = tuple(int(x) for x in flat)
        if len(self._flat) != n_entities * m:
            raise PlacementError(f"expected {n_entities * m} assignments, got {len(self._flat)}")
        if any(not 0 <= lp < n_lps for lp in self._flat):
            raise PlacementError("assignment refers to an LP outside [0, L)")
        self._ids = tuple(
            tuple(InstanceId(e, r) for r in range(m)) for e in range(n_entities)
        )

    def __getitem__(self, iid: InstanceId) -> LpId:
        return self._flat[iid[0] * self.m + iid[1]]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, PlacementMap) and (
            (self.n_entities, self.m, self.n_lps, self._flat)
            == (other.n_entities, other.m, other.n_lps, other._flat)
        )

    def __hash__(self) -> int:
        return hash((self.n_entities, self.m, self.n_lps, self._flat))

    def __repr__(self) -> str:
        return f"PlacementMap(N={self.n_entities}, M={self.m}, L={self.n_lps})"

    @property
    def assignment(self) -> dict[InstanceId, LpId]:
        return {iid: self[iid] for ids in self._ids for iid in ids}

    def instances(self, entity: int) -> tuple[InstanceId, ...]:
        return self._ids[entity]

    def all_instances(self) -> list[InstanceId]:
        return [iid for ids in self._ids for iid in ids]

    def lps_of(self, entity: int) -> tuple[LpId, ...]:
        base = entity * self.m
        return self._flat[base : base + self.m]

    def hosted_by(self, lp: LpId) -> list[InstanceId]:
        return [iid for ids in self._ids for iid in ids if self[iid] == lp]

    def load(self) -> list[int]:
        counts = [0] * self.n_lps
        for lp in self._flat:
            counts[lp] += 1
        return counts

    def satisfies_constraint(self) -> bool:
        return all(
            len(set(self.lps_of(e))) == self.m for e in range(self.n_entities)
        )

    def check_constraint(self) -> None:
        for e in range(self.n_entities):
            lps = self.lps_of(e)
            if len(set(lps)) != self.m:
                raise ConstraintViolation(f"entity {e} has co-located replicas on LPs {lps}")

    def moved(self, moves: Mapping[InstanceId, LpId]) -> PlacementMap:
        flat = list(self._flat)
        for iid, lp in moves.items():
            flat[iid.entity * self.m + iid.replica] = lp
        return PlacementMap(self.n_entities, self.m, self.n_lps, flat)


def place_instances(
    n_entities: int,
    m: int,
    n_lps: int,
    rng: np.random.Generator,
    enforce_constraint: bool = True,
    round_robin: bool = False,
) -> PlacementMap:
    """Assign N x M instances to LPs.

    Constrained placement draws a uniformly random M-subset of the LPs per
    entity; unconstrained placement draws each instance's LP independently.
    ``round_robin`` gives a deterministic, load-even constrained layout.
    """
    if m < 1 or n_entities < 0 or n_lps < 1:
        raise PlacementError(f"invalid sizes N={n_entities} M={m} L={n_lps}")
    if enforce_constraint and m > n_lps:
        raise PlacementError(
            f"cannot place M={m} replicas on distinct LPs with only L={n_lps} LPs"
        )
    if round_robin:
        if not enforce_constraint:
            raise PlacementError("round-robin placement is only defined with the constraint")
        flat = [(e * m + r) % n_lps for e in range(n_entities) for r in range(m)]
        return PlacementMap(n_entities, m, n_lps, flat)
    u = rng.random((n_entities, m))
    flat = place_from_uniforms(u, n_lps, enforce_constraint).ravel()
    return PlacementMap(n_entities, m, n_lps, flat)


def fan_out(
    send: OutboundSend,
    src: InstanceId,
    placement: PlacementMap,
    m: int,
    step: Timestep,
    seq: int,
) -> list[Message]:
    """The M copies one source instance emits for a logical send, one per destination replica."""
    if send.delay < 1:
        raise DomainError(f"delay must be >= 1 step, got {send.delay}")
    if m != placement.m:
        raise DomainError(f"placement holds {placement.m} replicas per entity, not {m}")
    dst_entity = send.dst_entity
    if not 0 <= dst_entity < placement.n_entities:
        raise DomainError(f"destination entity {dst_entity} does not exist")
    deliver = step + send.delay
    key = MessageKey(src.entity, dst_entity, step, seq, deliver)
    payload = send.payload
    d = digest(payload)
    new = tuple.__new__
    return [
        new(Message, (dst, key, src, seq, step, deliver, payload, d))
        for dst in placement.instances(dst_entity)
    ]


class Verdict(enum.Enum):
    DELIVER = "deliver"
    PENDING = "pending"
    DROP = "drop"


class Decision(NamedTuple):
    verdict: Verdict
    payload: Payload | None = None


DROP = Decision(Verdict.DROP)
PENDING = Decision(Verdict.PENDING)


class _Vote:
    __slots__ = ("replicas", "counts", "payloads", "delivered")

    def __init__(self):
        self.replicas: set[int] = set()
        self.counts: dict[bytes, int] = {}
        self.payloads: dict[bytes, Payload] = {}
        self.delivered: bytes | None = None


class VoteLedger:
    """Per destination instance bookkeeping of which copies have been seen.

    Entries are bucketed by delivery step so finished steps can be pruned;
    undelivered Byzantine entries are kept until the run ends.
    """

    def __init__(self):
        self._seen: dict[Timestep, set[MessageKey]] = {}
        self._votes: dict[Timestep, dict[MessageKey, _Vote]] = {}
        self._stale: dict[MessageKey, _Vote] = {}
        self.delivered = 0
        self.duplicates = 0
        self.corrupt = 0

    def votes(self, key: MessageKey) -> _Vote | None:
        bucket = self._votes.get(key.deliver_step)
        if bucket is not None and key in bucket:
            return bucket[key]
        return self._stale.get(key)

    def prune(self, before: Timestep) -> None:
        for step in [s for s in self._seen if s < before]:
            del self._seen[step]
        for step in [s for s in self._votes if s < before]:
            for key, vote in self._votes.pop(step).items():
                if vote.delivered is None:
                    self._stale[key] = vote

    def pending_keys(self) -> list[MessageKey]:
        keys = [k for k, v in self._stale.items() if v.delivered is None]
        for bucket in self._votes.values():
            keys.extend(k for k, v in bucket.items() if v.delivered is None)
        return sorted(keys)


def filter_crash(ledger: VoteLedger, msg: Message) -> Decision:
    """Deliver the first copy of each logical message, drop the rest."""
    seen = ledger._seen.get(msg.deliver_step)
    if seen is None:
        seen = ledger._seen[msg.deliver_step] = set()
    if msg.key in seen:
        ledger.duplicates += 1
        return DROP
    seen.add(msg.key)
    ledger.delivered += 1
    return Decision(Verdict.DELIVER, msg.payload)


def filter_byzantine(ledger: VoteLedger, msg: Message, m: int) -> Decision:
    """Deliver once ``majority_threshold(m)`` copies carry the same digest."""
    bucket = ledger._votes.get(msg.deliver_step)
    if bucket is None:
        bucket = ledger._votes[msg.deliver_step] = {}
    vote = bucket.get(msg.key)
    if vote is None:
        vote = bucket[msg.key] = _Vote()
    replica = msg.src.replica
    if replica in vote.replicas:
        ledger.duplicates += 1
        return DROP
    vote.replicas.add(replica)
    d = msg.digest
    if vote.delivered is not None:
        if d == vote.delivered:
            ledger.duplicates += 1
        else:
            ledger.corrupt += 1
        return DROP
    count = vote.counts.get(d, 0) + 1
    vote.counts[d] = count
    if d not in vote.payloads:
        vote.payloads[d] = msg.payload
    if 2 * count > m:
        vote.delivered = d
        ledger.corrupt += sum(c for other, c in vote.counts.items() if other != d)
        ledger.delivered += 1
        return Decision(Verdict.DELIVER, vote.payloads[d])
    return PENDING
