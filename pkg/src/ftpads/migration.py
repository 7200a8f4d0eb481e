"""Self-clustering migration that never co-locates sibling replicas.

Every ``window_steps`` each instance looks at which LP received the largest
share of its interactions during the window; if that LP is not its own, has
room, and hosts no replica of the same entity, the instance moves there.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Collection, Iterable, NamedTuple

from .core import ConfigError, ConstraintViolation, InstanceId, LpId
from .replication import PlacementMap


@dataclass(frozen=True)
class MigrationConfig:
    enabled: bool = False
    window_steps: int = 16
    threshold: float = 0.5
    load_cap: float = 1.5

    def __post_init__(self):
        if self.window_steps < 1:
            raise ConfigError(f"window_steps must be >= 1, got {self.window_steps}")
        if not 0.0 <= self.threshold < 1.0:
            raise ConfigError(f"threshold must lie in [0, 1), got {self.threshold}")
        if self.load_cap < 1.0:
            raise ConfigError(f"load_cap must be >= 1, got {self.load_cap}")


class MigrationDecision(NamedTuple):
    instance: InstanceId
    src: LpId
    dst: LpId


class InteractionTally:
    """Per-instance count of messages sent to each LP during the current window.

    ``interactions`` counts logical sends, so a destination LP's share is the
    fraction of the instance's interactions that had a recipient there.
    """

    def __init__(self):
        self.per_lp: dict[InstanceId, dict[LpId, int]] = defaultdict(dict)
        self.interactions: dict[InstanceId, int] = defaultdict(int)

    def record(self, iid: InstanceId, dst_lps: Iterable[LpId]) -> None:
        counts = self.per_lp[iid]
        for lp in dst_lps:
            counts[lp] = counts.get(lp, 0) + 1
        self.interactions[iid] += 1

    def merge(self, other: InteractionTally) -> None:
        for iid, counts in other.per_lp.items():
            mine = self.per_lp[iid]
            for lp, c in counts.items():
                mine[lp] = mine.get(lp, 0) + c
        for iid, n in other.interactions.items():
            self.interactions[iid] += n

    def reset(self) -> None:
        self.per_lp.clear()
        self.interactions.clear()

    def share(self, iid: InstanceId, lp: LpId) -> float:
        total = self.interactions.get(iid, 0)
        return self.per_lp.get(iid, {}).get(lp, 0) / total if total else 0.0


def load_limit(placement: PlacementMap, load_cap: float) -> float:
    return load_cap * math.ceil(placement.n_entities * placement.m / placement.n_lps)


def evaluate(
    tally: InteractionTally,
    placement: PlacementMap,
    config: MigrationConfig,
    eligible: Collection[LpId] | None = None,
) -> list[MigrationDecision]:
    """Migration decisions for one window, validated in ascending instance order."""
    limit = load_limit(placement, config.load_cap)
    load = placement.load()
    moved: dict[InstanceId, LpId] = {}
    decisions = []
    for iid in sorted(tally.interactions):
        total = tally.interactions[iid]
        counts = tally.per_lp.get(iid)
        if not total or not counts:
            continue
        top = min(counts, key=lambda lp: (-counts[lp], lp))
        if counts[top] / total <= config.threshold:
            continue
        cur = moved.get(iid, placement[iid])
        if top == cur:
            continue
        if eligible is not None and (top not in eligible or cur not in eligible):
            continue
        siblings = {
            moved.get(sib, placement[sib])
            for sib in placement.instances(iid.entity)
            if sib != iid
        }
        if top in siblings or load[top] + 1 > limit:
            continue
        decisions.append(MigrationDecision(iid, cur, top))
        moved[iid] = top
        load[cur] -= 1
        load[top] += 1
    return decisions


def commit(decisions: Iterable[MigrationDecision], placement: PlacementMap, engine=None) -> PlacementMap:
    """Apply decisions and return the new placement; the engine moves state and in-flight messages."""
    decisions = list(decisions)
    if not decisions:
        return placement
    moves: dict[InstanceId, LpId] = {}
    for dec in decisions:
        cur = moves.get(dec.instance, placement[dec.instance])
        if cur != dec.src or dec.dst == dec.src:
            raise ConstraintViolation(f"stale or empty migration {dec}")
        for sib in placement.instances(dec.instance.entity):
            if sib != dec.instance and moves.get(sib, placement[sib]) == dec.dst:
                raise ConstraintViolation(f"{dec} would co-locate {sib} and {dec.instance}")
        moves[dec.instance] = dec.dst
    updated = placement.moved(moves)
    if engine is not None:
        engine.relocate(decisions, updated)
    return updated
