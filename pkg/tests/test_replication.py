import itertools
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from ftpads.core import (
    ConstraintViolation,
    DomainError,
    InstanceId,
    OutboundSend,
    PlacementError,
    digest,
    majority_threshold,
)
from ftpads.replication import (
    PlacementMap,
    Verdict,
    VoteLedger,
    fan_out,
    filter_byzantine,
    filter_crash,
    place_instances,
)


def test_constrained_placement_distinct_lps():
    pm = place_instances(500, 3, 5, np.random.default_rng(1))
    assert pm.satisfies_constraint()
    for e in range(500):
        assert len(set(pm.lps_of(e))) == 3


def test_constrained_placement_rejects_m_above_l():
    with pytest.raises(PlacementError):
        place_instances(10, 4, 3, np.random.default_rng(0))


def test_unconstrained_allows_m_above_l():
    pm = place_instances(10, 4, 3, np.random.default_rng(0), enforce_constraint=False)
    assert len(pm.all_instances()) == 40


def test_constrained_subsets_uniform():
    # every one of the C(5,3)=10 LP subsets should be equally likely
    n = 20_000
    pm = place_instances(n, 3, 5, np.random.default_rng(42))
    counts = Counter(frozenset(pm.lps_of(e)) for e in range(n))
    assert len(counts) == math.comb(5, 3)
    assert stats.chisquare(list(counts.values())).pvalue > 1e-3


def test_unconstrained_lps_uniform_and_independent():
    n = 20_000
    pm = place_instances(n, 2, 4, np.random.default_rng(7), enforce_constraint=False)
    counts = Counter(pm.lps_of(e) for e in range(n))
    assert len(counts) == 16  # ordered pairs, including repeats
    assert stats.chisquare(list(counts.values())).pvalue > 1e-3


def test_round_robin_is_even_and_constrained():
    pm = place_instances(10, 3, 5, None, round_robin=True)
    assert pm.load() == [6] * 5
    assert pm.satisfies_constraint()


def test_placement_reproducible():
    a = place_instances(100, 3, 7, np.random.default_rng(3))
    b = place_instances(100, 3, 7, np.random.default_rng(3))
    assert a == b and hash(a) == hash(b)


def test_check_constraint_and_moved():
    pm = PlacementMap(2, 2, 3, [0, 1, 1, 2])
    pm.check_constraint()
    bad = pm.moved({InstanceId(0, 1): 0})
    assert not bad.satisfies_constraint()
    with pytest.raises(ConstraintViolation):
        bad.check_constraint()
    assert pm[InstanceId(0, 1)] == 1  # original untouched


def test_hosted_by_and_load():
    pm = PlacementMap(2, 2, 3, [0, 1, 1, 2])
    assert pm.hosted_by(1) == [InstanceId(0, 1), InstanceId(1, 0)]
    assert pm.load() == [1, 2, 1]


def _placement(n, m, l, seed=0):
    return place_instances(n, m, l, np.random.default_rng(seed))


@pytest.mark.parametrize("m", [1, 2, 3, 5])
def test_fan_out_targets_every_replica(m):
    pm = _placement(4, m, 6)
    copies = fan_out(OutboundSend(2, b"hi", 3), InstanceId(0, 0), pm, m, 10, 4)
    assert [c.dst for c in copies] == list(pm.instances(2))
    assert {c.key for c in copies} == {copies[0].key}
    assert copies[0].key.deliver_step == 13
    assert all(c.digest == digest(b"hi") for c in copies)


def test_fan_out_validation():
    pm = _placement(4, 3, 6)
    with pytest.raises(DomainError):
        fan_out(OutboundSend(2, b"", 0), InstanceId(0, 0), pm, 3, 0, 0)
    with pytest.raises(DomainError):
        fan_out(OutboundSend(9, b"", 1), InstanceId(0, 0), pm, 3, 0, 0)
    with pytest.raises(DomainError):
        fan_out(OutboundSend(1, b"", 1), InstanceId(0, 0), pm, 2, 0, 0)


def _copies_to_one(m, payloads, dst_replica=0):
    """The M copies one destination instance receives for a single logical send."""
    pm = _placement(2, m, m)
    out = []
    for r in range(m):
        c = fan_out(OutboundSend(1, b"good", 1), InstanceId(0, r), pm, m, 0, 0)[dst_replica]
        if payloads[r] is not None:
            out.append(c.with_payload(payloads[r]) if payloads[r] != b"good" else c)
    return out


def test_crash_filter_first_copy_wins():
    ledger = VoteLedger()
    msgs = _copies_to_one(3, [b"good"] * 3)
    verdicts = [filter_crash(ledger, m).verdict for m in msgs]
    assert verdicts == [Verdict.DELIVER, Verdict.DROP, Verdict.DROP]
    assert (ledger.delivered, ledger.duplicates) == (1, 2)


@given(st.permutations(range(4)), st.integers(1, 4))
def test_crash_filter_exactly_once_any_order_any_survivors(order, survivors):
    msgs = _copies_to_one(4, [b"good"] * 4)
    ledger = VoteLedger()
    delivered = [
        filter_crash(ledger, msgs[i]) for i in order[:survivors]
    ]
    assert sum(d.verdict is Verdict.DELIVER for d in delivered) == 1
    assert delivered[0].payload == b"good"


@pytest.mark.parametrize("m", [3, 5])
def test_byzantine_filter_exhaustive(m):
    """Every pattern of genuine / corrupted / missing copies, in every arrival order.

    Oracle: delivery happens iff some digest reaches a strict majority, and
    with at most f faulty sources that digest is always the genuine one.
    """
    f = (m - 1) // 2
    need = majority_threshold(m)
    options = [b"good", b"bad1", b"bad2", None]
    orders = list(itertools.permutations(range(m))) if m == 3 else [tuple(range(m)), tuple(reversed(range(m)))]
    for pattern in itertools.product(options, repeat=m):
        msgs = _copies_to_one(m, list(pattern))
        by_replica = {c.src.replica: c for c in msgs}
        counts = Counter(p for p in pattern if p is not None)
        winners = [p for p, c in counts.items() if c >= need]
        faulty = sum(p != b"good" for p in pattern)
        for order in orders:
            ledger = VoteLedger()
            out = [filter_byzantine(ledger, by_replica[r], m) for r in order if r in by_replica]
            got = [d.payload for d in out if d.verdict is Verdict.DELIVER]
            assert got == winners, (pattern, order)
            if faulty <= f:
                assert got == [b"good"]


def test_byzantine_filter_ignores_replayed_replica():
    msgs = _copies_to_one(3, [b"good", b"bad", b"good"])
    ledger = VoteLedger()
    assert filter_byzantine(ledger, msgs[0], 3).verdict is Verdict.PENDING
    assert filter_byzantine(ledger, msgs[0], 3).verdict is Verdict.DROP
    assert filter_byzantine(ledger, msgs[1], 3).verdict is Verdict.PENDING
    assert filter_byzantine(ledger, msgs[2], 3).verdict is Verdict.DELIVER
    assert (ledger.delivered, ledger.duplicates, ledger.corrupt) == (1, 1, 1)


def test_pending_survives_prune():
    msgs = _copies_to_one(3, [b"good", b"bad", None])
    ledger = VoteLedger()
    for m in msgs:
        filter_byzantine(ledger, m, 3)
    ledger.prune(100)
    assert ledger.pending_keys() == [msgs[0].key]
    assert ledger.votes(msgs[0].key) is not None


@settings(max_examples=50)
@given(st.integers(1, 6), st.integers(0, 3), st.integers(0, 2**32))
def test_placement_constraint_property(m, extra, seed):
    pm = place_instances(30, m, m + extra, np.random.default_rng(seed))
    assert pm.satisfies_constraint()
    assert sum(pm.load()) == 30 * m
