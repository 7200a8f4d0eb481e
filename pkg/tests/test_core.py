import hashlib
import math

import pytest
from hypothesis import given, strategies as st

from ftpads.core import (
    DomainError,
    FailureModel,
    FaultKind,
    InstanceId,
    Message,
    MessageKey,
    derive_seed,
    digest,
    majority_threshold,
    replication_degree,
)


@pytest.mark.parametrize("f, m", [(0, 1), (1, 2), (2, 3), (20, 21)])
def test_crash_degree(f, m):
    assert replication_degree(FailureModel.crash(f)) == m


@pytest.mark.parametrize("f, m", [(0, 1), (1, 3), (2, 5), (10, 21)])
def test_byzantine_degree(f, m):
    assert replication_degree(FailureModel.byzantine(f)) == m


def test_negative_faults_rejected():
    with pytest.raises(DomainError):
        FailureModel(FaultKind.CRASH, -1)


@pytest.mark.parametrize("m, need", [(1, 1), (2, 2), (3, 2), (4, 3), (5, 3), (21, 11)])
def test_majority_threshold_table(m, need):
    assert majority_threshold(m) == need


@given(st.integers(1, 10_000))
def test_majority_is_ceiling_and_strict(m):
    need = majority_threshold(m)
    assert need == math.ceil((m + 1) / 2)
    assert 2 * need > m
    assert 2 * (need - 1) <= m


def test_majority_rejects_zero():
    with pytest.raises(DomainError):
        majority_threshold(0)


def test_derive_seed_is_stable_blake2b():
    expected = int.from_bytes(hashlib.blake2b(b"entity:7:3", digest_size=8).digest(), "big")
    assert derive_seed("entity", 7, 3) == expected
    assert derive_seed("entity", 7, 3) != derive_seed("entity", 7, 4)
    assert 0 <= derive_seed("x") < 2**64


def test_digest_size_and_sensitivity():
    assert len(digest(b"abc")) == 16
    assert digest(b"abc") != digest(b"abd")


def test_message_tuple_order_matches_delivery_order():
    key = MessageKey(1, 2, 0, 0, 3)
    a = Message(InstanceId(2, 0), key, InstanceId(1, 1), 0, 0, 3, b"x", digest(b"x"))
    b = a._replace(src=InstanceId(1, 0))
    c = a._replace(dst=InstanceId(1, 5))
    assert sorted([a, b, c]) == [c, b, a]


def test_with_payload_recomputes_digest():
    key = MessageKey(1, 2, 0, 0, 3)
    a = Message(InstanceId(2, 0), key, InstanceId(1, 1), 0, 0, 3, b"x", digest(b"x"))
    b = a.with_payload(b"y")
    assert b.digest == digest(b"y") and b.key == a.key and b.src == a.src
