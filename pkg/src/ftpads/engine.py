"""Time-stepped kernel hosting replicated entities on logical processes.

Each step every live LP applies due failure events, delivers the messages
due at that step through the replica filter, runs ``on_step`` for its
instances, fans out the resulting sends and signals end-of-step.  Routing
happens at the barrier, single-threaded and in LP order, so the outcome
does not depend on how LPs were scheduled onto workers.
"""

from __future__ import annotations

import hashlib
import logging
import random
import threading
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .core import (
    ConfigError,
    EntityId,
    FailureModel,
    FaultKind,
    InstanceId,
    LpId,
    Message,
    MessageKey,
    OutboundSend,
    Payload,
    PlacementError,
    Timestep,
    derive_seed,
    majority_threshold,
    replication_degree,
)
from .faults import ByzantineBehavior, FailureSchedule, LpStatus, apply_due_events, mangle
from .migration import InteractionTally, MigrationConfig, commit, evaluate
from .replication import (
    PlacementMap,
    Verdict,
    VoteLedger,
    fan_out,
    filter_byzantine,
    filter_crash,
    place_instances,
)

__all__ = [
    "EntityBehavior",
    "SimulationConfig",
    "RunReport",
    "MessageCounts",
    "LogicalProcess",
    "Simulation",
    "run",
    "delivery_order",
    "per_instance_rng_seed",
    "OutboundSend",
]

log = logging.getLogger(__name__)

EventSink = Callable[[Timestep, "LpId | None", str, dict], None]


class EntityBehavior:
    """Model code run identically by every replica of an entity.

    Implementations must be deterministic in (seed, delivered messages,
    step count); the engine hands each instance its own ``random.Random``.
    """

    def setup(self, n_entities: int, master_seed: int) -> None:
        """Called once before instances are created."""

    def on_init(self, entity: EntityId, seed: int) -> Any:
        raise NotImplementedError

    def on_step(self, state: Any, step: Timestep, rng: random.Random) -> list[OutboundSend]:
        return []

    def on_message(
        self, state: Any, src_entity: EntityId, payload: Payload, step: Timestep, rng: random.Random
    ) -> list[OutboundSend]:
        return []

    def state_digest(self, state: Any) -> bytes:
        raise NotImplementedError


@dataclass(frozen=True)
class SimulationConfig:
    n_lps: int
    n_entities: int
    model: FailureModel
    total_steps: int
    master_seed: int = 0
    enforce_constraint: bool = True
    round_robin: bool = False
    migration: MigrationConfig = field(default_factory=MigrationConfig)
    workers: int = 1

    @property
    def m(self) -> int:
        return replication_degree(self.model)

    def validate(self) -> None:
        if self.n_lps < 1 or self.n_entities < 1:
            raise ConfigError(f"need L >= 1 and N >= 1, got L={self.n_lps} N={self.n_entities}")
        if self.total_steps < 0:
            raise ConfigError("total_steps must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.enforce_constraint and self.m > self.n_lps:
            raise PlacementError(
                f"replication degree M={self.m} exceeds L={self.n_lps}; "
                "replicas cannot be placed on distinct LPs"
            )


@dataclass(frozen=True)
class MessageCounts:
    logical_sends: int = 0
    physical_sends: int = 0
    delivered: int = 0
    filtered_duplicates: int = 0
    voted_deliveries: int = 0
    dropped_corrupt: int = 0


@dataclass(frozen=True)
class RunReport:
    completed: bool
    final_step: Timestep
    entity_digests: dict[EntityId, str | None]
    msg_counts: MessageCounts
    migrations: int = 0
    migration_windows: int = 0
    corrupt_deliveries: int = 0
    pending_at_end: int = 0

    def digest_of_entity_digests(self) -> str:
        h = hashlib.blake2b(digest_size=16)
        for entity in sorted(self.entity_digests):
            h.update(f"{entity}={self.entity_digests[entity]};".encode())
        return h.hexdigest()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["entity_digests"] = {str(k): v for k, v in sorted(self.entity_digests.items())}
        return d


def per_instance_rng_seed(master_seed: int, entity: EntityId) -> int:
    """Seed shared by all replicas of ``entity``: independent of replica index and LP."""
    return derive_seed("entity", master_seed, entity)


def delivery_order(inbox: Iterable[Message]) -> list[Message]:
    """Total order on the messages due at one step: destination, identity, source replica.

    ``Message`` field order makes this the natural tuple order.
    """
    return sorted(inbox)


class _Instance:
    __slots__ = ("iid", "state", "rng", "ledger", "alive", "seq_step", "seqs")

    def __init__(self, iid: InstanceId, state: Any, rng: random.Random):
        self.iid = iid
        self.state = state
        self.rng = rng
        self.ledger = VoteLedger()
        self.alive = True
        self.seq_step = -1
        self.seqs: dict[EntityId, int] = {}


class LogicalProcess:
    """Container of entity instances; the unit of failure."""

    def __init__(self, lp_id: LpId):
        self.id = lp_id
        self.hosted: dict[InstanceId, _Instance] = {}
        self.inbox: dict[Timestep, list[Message]] = defaultdict(list)
        self.status = LpStatus.RUNNING
        self.byzantine: ByzantineBehavior | None = None
        self.byz_rng: random.Random | None = None
        self.tally = InteractionTally()

    def __repr__(self) -> str:
        return f"LogicalProcess({self.id}, {self.status.value}, hosting {len(self.hosted)})"

    def crash(self) -> None:
        self.status = LpStatus.CRASHED
        self.inbox.clear()
        for inst in self.hosted.values():
            inst.alive = False
            inst.state = None
        self.hosted.clear()
        self.tally.reset()

    def turn_byzantine(self, behavior: ByzantineBehavior) -> None:
        self.status = LpStatus.BYZANTINE
        self.byzantine = behavior
        self.byz_rng = random.Random(derive_seed("byzantine", behavior.rng_seed, self.id))


class Barrier:
    """End-of-step coordinator; crashed LPs are excluded when the injector crashes them."""

    def __init__(self, lps: Iterable[LpId]):
        self.expected = set(lps)
        self._arrived: set[LpId] = set()
        self._lock = threading.Lock()

    def exclude(self, lp: LpId) -> None:
        self.expected.discard(lp)

    def signal(self, lp: LpId) -> None:
        with self._lock:
            self._arrived.add(lp)

    def complete(self, step: Timestep) -> None:
        if self._arrived != self.expected:
            missing = sorted(self.expected - self._arrived)
            raise RuntimeError(f"barrier at step {step} missing end-of-step from LPs {missing}")
        self._arrived = set()


class _StepOutput:
    __slots__ = ("messages", "genuine", "tally", "corrupt")

    def __init__(self):
        self.corrupt = 0
        self.messages: list[Message] = []
        self.genuine: list[tuple[MessageKey, bytes]] = []
        self.tally: list[tuple[InstanceId, list[Message]]] = []


class Simulation:
    def __init__(
        self,
        config: SimulationConfig,
        behavior: EntityBehavior,
        schedule: FailureSchedule | None = None,
        on_event: EventSink | None = None,
    ):
        config.validate()
        self.config = config
        self.behavior = behavior
        self.schedule = schedule or FailureSchedule()
        self.schedule.validate(config.n_lps)
        self.on_event = on_event
        self.m = config.m
        self.byzantine_model = config.model.kind is FaultKind.BYZANTINE
        self.need = majority_threshold(self.m) if self.byzantine_model else 1

        rng = np.random.default_rng(derive_seed("placement", config.master_seed))
        self.placement = place_instances(
            config.n_entities,
            self.m,
            config.n_lps,
            rng,
            enforce_constraint=config.enforce_constraint,
            round_robin=config.round_robin,
        )
        self._where: dict[InstanceId, LpId] = self.placement.assignment
        self.lps = [LogicalProcess(i) for i in range(config.n_lps)]
        self.barrier = Barrier(range(config.n_lps))

        behavior.setup(config.n_entities, config.master_seed)
        self.instances: list[_Instance] = []
        for e in range(config.n_entities):
            seed = per_instance_rng_seed(config.master_seed, e)
            for iid in self.placement.instances(e):
                inst = _Instance(iid, behavior.on_init(e, seed), random.Random(seed))
                self.instances.append(inst)
                self.lps[self._where[iid]].hosted[iid] = inst

        self._genuine: dict[Timestep, dict[MessageKey, set[bytes]]] = defaultdict(dict)
        self.logical_sends = 0
        self.physical_sends = 0
        self.corrupt_deliveries = 0
        self.migrations = 0
        self.migration_windows = 0
        self.step = 0

    def _emit(self, kind: str, step: Timestep, lp: LpId | None = None, **detail) -> None:
        if self.on_event is not None:
            self.on_event(step, lp, kind, detail)

    # -- per-LP phase; touches only LP-local state --------------------------------

    def _process(self, lp: LogicalProcess, t: Timestep) -> _StepOutput:
        out = _StepOutput()
        hosted = lp.hosted
        behavior = self.behavior
        due = lp.inbox.pop(t, None)
        if due:
            byz = self.byzantine_model
            m = self.m
            genuine = self._genuine.get(t, {})
            touched = set()
            for msg in delivery_order(due):
                if msg.deliver_step != t:
                    raise AssertionError(f"message due at {msg.deliver_step} seen at step {t}")
                inst = hosted.get(msg.dst)
                if inst is None:
                    continue
                touched.add(inst)
                if byz:
                    verdict, payload = filter_byzantine(inst.ledger, msg, m)
                else:
                    verdict, payload = filter_crash(inst.ledger, msg)
                if verdict is not Verdict.DELIVER:
                    continue
                # the copy that triggers delivery always carries the delivered payload's digest
                if msg.digest not in genuine.get(msg.key, ()):
                    out.corrupt += 1
                sends = behavior.on_message(inst.state, msg.src.entity, payload, t, inst.rng)
                if sends:
                    self._send(lp, inst, sends, t, out)
            # all copies due at t arrive together, so these ledger entries are final
            for inst in touched:
                inst.ledger.prune(t + 1)
        for iid in sorted(hosted):
            inst = hosted[iid]
            sends = behavior.on_step(inst.state, t, inst.rng)
            if sends:
                self._send(lp, inst, sends, t, out)
        self.barrier.signal(lp.id)
        return out

    def _send(self, lp: LogicalProcess, inst: _Instance, sends, t: Timestep, out: _StepOutput) -> None:
        if inst.seq_step != t:
            inst.seq_step = t
            inst.seqs = {}
        seqs = inst.seqs
        placement = self.placement
        m = self.m
        track = self.config.migration.enabled
        for send in sends:
            seq = seqs.get(send.dst_entity, 0)
            seqs[send.dst_entity] = seq + 1
            copies = fan_out(send, inst.iid, placement, m, t, seq)
            out.genuine.append((copies[0].key, copies[0].digest))
            if lp.byzantine is not None:
                rng = lp.byz_rng
                copies = [c for c in (mangle(lp.byzantine, c, rng) for c in copies) if c is not None]
            if track:
                out.tally.append((inst.iid, copies))
            out.messages.extend(copies)

    # -- barrier phase; single-threaded ---------------------------------------------

    def _route(self, outputs: Sequence[_StepOutput]) -> None:
        where = self._where
        lps = self.lps
        crashed = LpStatus.CRASHED
        for out in outputs:
            for key, d in out.genuine:
                bucket = self._genuine[key.deliver_step]
                seen = bucket.get(key)
                if seen is None:
                    bucket[key] = {d}
                    self.logical_sends += 1
                else:
                    seen.add(d)
            self.corrupt_deliveries += out.corrupt
            self.physical_sends += len(out.messages)
            for msg in out.messages:
                target = lps[where[msg.dst]]
                if target.status is not crashed:
                    target.inbox[msg.deliver_step].append(msg)
            for iid, copies in out.tally:
                lps[where[iid]].tally.record(iid, [where[c.dst] for c in copies])

    def _migrate(self, t: Timestep) -> None:
        cfg = self.config.migration
        tally = InteractionTally()
        for lp in self.lps:
            tally.merge(lp.tally)
            lp.tally.reset()
        eligible = {lp.id for lp in self.lps if lp.status is LpStatus.RUNNING}
        decisions = evaluate(tally, self.placement, cfg, eligible)
        self.placement = commit(decisions, self.placement, self)
        if self.config.enforce_constraint:
            self.placement.check_constraint()
        self.migration_windows += 1
        self._emit("migration_window", t, decisions=len(decisions), constraint_ok=True)

    def relocate(self, decisions, placement: PlacementMap) -> None:
        """Move instance state and reroute in-flight messages after a commit."""
        moved: dict[InstanceId, LpId] = {}
        for dec in decisions:
            inst = self.lps[dec.src].hosted.pop(dec.instance)
            self.lps[dec.dst].hosted[dec.instance] = inst
            moved[dec.instance] = dec.dst
            self.migrations += 1
            self._emit("migration", self.step, dec.src, instance=list(dec.instance), dst=dec.dst)
        # collect before redistributing: one window may swap instances between two LPs
        in_flight = []
        for src in sorted({dec.src for dec in decisions}):
            inbox = self.lps[src].inbox
            for step, msgs in inbox.items():
                keep = []
                for msg in msgs:
                    (keep if msg.dst not in moved else in_flight).append(msg)
                inbox[step] = keep
        for msg in in_flight:
            self.lps[moved[msg.dst]].inbox[msg.deliver_step].append(msg)
        self._where.update(moved)
        self.placement = placement

    # -- driver -------------------------------------------------------------------

    def run(self) -> RunReport:
        cfg = self.config
        pool = ThreadPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
        try:
            for t in range(cfg.total_steps):
                self.step = t
                for lp_id in sorted(apply_due_events(self.schedule, t, self.lps, self.barrier)):
                    self._emit(self.lps[lp_id].status.value, t, lp_id)
                if cfg.migration.enabled and t > 0 and t % cfg.migration.window_steps == 0:
                    self._migrate(t)
                live = [lp for lp in self.lps if lp.status is not LpStatus.CRASHED]
                if pool is None:
                    outputs = [self._process(lp, t) for lp in live]
                else:
                    outputs = list(pool.map(self._process, live, [t] * len(live)))
                self.barrier.complete(t)
                self._route(outputs)
                self._genuine.pop(t, None)
        finally:
            if pool is not None:
                pool.shutdown()
        return self._report()

    def _report(self) -> RunReport:
        by_entity: dict[EntityId, list[_Instance]] = defaultdict(list)
        for inst in self.instances:
            by_entity[inst.iid.entity].append(inst)
        completed = True
        digests: dict[EntityId, str | None] = {}
        for e in range(self.config.n_entities):
            votes = Counter(
                self.behavior.state_digest(inst.state).hex()
                for inst in by_entity[e]
                if inst.alive and self.lps[self._where[inst.iid]].status is LpStatus.RUNNING
            )
            if not votes:
                digests[e] = None
                completed = False
                continue
            best, count = min(votes.items(), key=lambda kv: (-kv[1], kv[0]))
            digests[e] = best
            if count < self.need:
                completed = False
        delivered = sum(inst.ledger.delivered for inst in self.instances)
        counts = MessageCounts(
            logical_sends=self.logical_sends,
            physical_sends=self.physical_sends,
            delivered=delivered,
            filtered_duplicates=sum(inst.ledger.duplicates for inst in self.instances),
            voted_deliveries=delivered if self.byzantine_model else 0,
            dropped_corrupt=sum(inst.ledger.corrupt for inst in self.instances),
        )
        pending = sum(len(inst.ledger.pending_keys()) for inst in self.instances)
        report = RunReport(
            completed=completed,
            final_step=max(self.config.total_steps - 1, 0),
            entity_digests=digests,
            msg_counts=counts,
            migrations=self.migrations,
            migration_windows=self.migration_windows,
            corrupt_deliveries=self.corrupt_deliveries,
            pending_at_end=pending,
        )
        self._emit("run_end", report.final_step, completed=completed)
        return report


def run(
    config: SimulationConfig,
    behavior: EntityBehavior,
    schedule: FailureSchedule | None = None,
    on_event: EventSink | None = None,
) -> RunReport:
    return Simulation(config, behavior, schedule, on_event).run()
