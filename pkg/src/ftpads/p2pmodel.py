"""PING/PONG latency estimation over a random directed overlay.

Nodes periodically PING either an out-neighbor (probability ``p``) or a
random non-neighbor; the receiver answers with a PONG and the sender folds
half the round trip into a running mean per peer.  Every ``refresh_period``
steps a node swaps its slowest neighbor for the fastest known non-neighbor.
"""

from __future__ import annotations

import hashlib
import math
import random
import struct
from dataclasses import dataclass, field

from .core import DomainError, EntityId, OutboundSend, Payload, Timestep, derive_seed
from .engine import EntityBehavior

PING = 0
PONG = 1
_WIRE = struct.Struct(">BQ")


@dataclass(frozen=True)
class OverlayGraph:
    n: int
    d: int
    adjacency: tuple[tuple[EntityId, ...], ...]

    def neighbors(self, node: EntityId) -> tuple[EntityId, ...]:
        return self.adjacency[node]

    def in_degrees(self) -> list[int]:
        deg = [0] * self.n
        for out in self.adjacency:
            for v in out:
                deg[v] += 1
        return deg


def build_overlay(n: int, d: int, rng: random.Random) -> OverlayGraph:
    """Each node gets a uniform random d-subset of the other n - 1 nodes as out-neighbors."""
    if not 1 <= d < n:
        raise DomainError(f"out-degree must satisfy 1 <= d < n, got d={d} n={n}")
    adjacency = []
    for v in range(n):
        picks = rng.sample(range(n - 1), d)
        adjacency.append(tuple(u + (u >= v) for u in picks))
    return OverlayGraph(n, d, tuple(adjacency))


@dataclass(frozen=True)
class LatencyModel:
    mu: float = math.log(4.0)
    sigma: float = 0.5
    step_quantum: float = 1.0

    def __post_init__(self):
        if self.sigma < 0 or self.step_quantum <= 0:
            raise DomainError(f"invalid latency model {self}")


def sample_latency_steps(model: LatencyModel, rng: random.Random) -> int:
    return max(1, int(round(rng.lognormvariate(model.mu, model.sigma) / model.step_quantum)))


@dataclass(frozen=True)
class P2PParams:
    degree: int = 5
    ping_period: int = 4
    p: float = 0.8
    latency: LatencyModel = field(default_factory=LatencyModel)
    refresh_period: int = 32

    def __post_init__(self):
        if self.ping_period < 1:
            raise DomainError("ping_period must be >= 1")
        if not 0.0 <= self.p <= 1.0:
            raise DomainError("p must lie in [0, 1]")
        if self.refresh_period < 0:
            raise DomainError("refresh_period must be >= 0 (0 disables refresh)")


class P2PNodeState:
    __slots__ = ("node", "neighbors", "rtt_sum", "rtt_count", "pending", "next_seq")

    def __init__(self, node: EntityId, neighbors: list[EntityId]):
        self.node = node
        self.neighbors = neighbors
        self.rtt_sum: dict[EntityId, int] = {}
        self.rtt_count: dict[EntityId, int] = {}
        self.pending: dict[int, tuple[EntityId, Timestep]] = {}
        self.next_seq = 0

    @property
    def latency_estimates(self) -> dict[EntityId, float]:
        """Mean one-way latency per peer, in steps."""
        return {peer: s / (2 * self.rtt_count[peer]) for peer, s in self.rtt_sum.items()}


class P2PBehavior(EntityBehavior):
    def __init__(self, params: P2PParams | None = None, overlay: OverlayGraph | None = None):
        self.params = params or P2PParams()
        self.overlay = overlay

    def setup(self, n_entities: int, master_seed: int) -> None:
        if self.overlay is not None and self.overlay.n == n_entities:
            return
        degree = min(self.params.degree, n_entities - 1)
        rng = random.Random(derive_seed("overlay", master_seed))
        self.overlay = build_overlay(n_entities, degree, rng)

    def on_init(self, entity: EntityId, seed: int) -> P2PNodeState:
        return P2PNodeState(entity, list(self.overlay.neighbors(entity)))

    def _pick_target(self, state: P2PNodeState, rng: random.Random) -> EntityId:
        n = self.overlay.n
        nbrs = state.neighbors
        if rng.random() < self.params.p or len(nbrs) >= n - 1:
            return nbrs[rng.randrange(len(nbrs))]
        excluded = set(nbrs)
        excluded.add(state.node)
        while True:
            cand = rng.randrange(n)
            if cand not in excluded:
                return cand

    def on_step(self, state: P2PNodeState, step: Timestep, rng: random.Random) -> list[OutboundSend]:
        params = self.params
        if params.refresh_period and step and step % params.refresh_period == 0:
            refresh_neighbors(state)
        if step % params.ping_period != state.node % params.ping_period:
            return []
        target = self._pick_target(state, rng)
        seq = state.next_seq
        state.next_seq += 1
        state.pending[seq] = (target, step)
        delay = sample_latency_steps(params.latency, rng)
        return [OutboundSend(target, _WIRE.pack(PING, seq), delay)]

    def on_message(
        self, state: P2PNodeState, src_entity: EntityId, payload: Payload, step: Timestep, rng: random.Random
    ) -> list[OutboundSend]:
        try:
            kind, seq = _WIRE.unpack(payload)
        except struct.error:
            return []
        if kind == PING:
            delay = sample_latency_steps(self.params.latency, rng)
            return [OutboundSend(src_entity, _WIRE.pack(PONG, seq), delay)]
        if kind == PONG:
            entry = state.pending.get(seq)
            if entry is not None and entry[0] == src_entity:
                del state.pending[seq]
                state.rtt_sum[src_entity] = state.rtt_sum.get(src_entity, 0) + step - entry[1]
                state.rtt_count[src_entity] = state.rtt_count.get(src_entity, 0) + 1
        return []

    def state_digest(self, state: P2PNodeState) -> bytes:
        canon = (
            state.node,
            tuple(state.neighbors),
            tuple(sorted((p, s, state.rtt_count[p]) for p, s in state.rtt_sum.items())),
            tuple(sorted(state.pending.items())),
            state.next_seq,
        )
        return hashlib.blake2b(repr(canon).encode(), digest_size=16).digest()


def refresh_neighbors(state: P2PNodeState) -> bool:
    """Swap the slowest measured neighbor for a faster known non-neighbor; out-degree is unchanged."""
    est = state.latency_estimates
    nbrs = state.neighbors
    ranked = [(est[v], v) for v in nbrs if v in est]
    others = [(lat, v) for v, lat in est.items() if v not in nbrs and v != state.node]
    if not ranked or not others:
        return False
    worst = max(ranked)
    best = min(others)
    if best[0] >= worst[0]:
        return False
    nbrs[nbrs.index(worst[1])] = best[1]
    return True
