import hashlib
import struct

import pytest

from ftpads.core import OutboundSend
from ftpads.engine import EntityBehavior


class Gossip(EntityBehavior):
    """Small deterministic model: each entity folds what it hears into a running hash."""

    def __init__(self, period=1, max_delay=3):
        self.period = period
        self.max_delay = max_delay
        self.n = 0

    def setup(self, n_entities, master_seed):
        self.n = n_entities

    def on_init(self, entity, seed):
        return {"id": entity, "acc": hashlib.blake2b(str(entity).encode(), digest_size=8).digest(), "heard": 0}

    def on_step(self, state, step, rng):
        if (step + state["id"]) % self.period:
            return []
        dst = rng.randrange(self.n)
        delay = rng.randint(1, self.max_delay)
        return [OutboundSend(dst, struct.pack(">QQ", step, state["id"]) + state["acc"], delay)]

    def on_message(self, state, src_entity, payload, step, rng):
        state["acc"] = hashlib.blake2b(state["acc"] + payload + bytes([src_entity % 256]), digest_size=8).digest()
        state["heard"] += 1
        if rng.random() < 0.25:
            return [OutboundSend(src_entity, b"ack", 1)]
        return []

    def state_digest(self, state):
        return hashlib.blake2b(state["acc"] + state["heard"].to_bytes(8, "big"), digest_size=16).digest()


@pytest.fixture
def gossip():
    return Gossip()


_criteria: dict[int, list[str]] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or report.outcome != "passed":
        num = int(report.nodeid.split("test_criterion_")[1][:2])
        _criteria.setdefault(num, []).append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    from test_acceptance import CRITERIA

    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        outcomes = _criteria[num]
        ok = all(o == "passed" for o in outcomes)
        passed = sum(o == "passed" for o in outcomes)
        terminalreporter.write_line(
            f"criterion {num:2d} {'PASS' if ok else 'FAIL'} ({passed}/{len(outcomes)} checks): {CRITERIA[num]}"
        )
