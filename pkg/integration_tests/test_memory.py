"""
Tests for the mixed relationship memory: routing between the frequency table
and the obvious store, keyed retrieval, movability and snapshots
"""

import os
import sys

import pytest

# Add the project root to Python path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from shared_code.difference import Difference, DifferenceSet, Dimension, Direction
from shared_code.exceptions import InsufficientDataError, MisuseError, NoKeyError, UnknownIdentifierError
from shared_code.memory import (
    Generality,
    MixedMemory,
    RelationshipRecord,
    Scenario,
    StoreKind,
    assess_movability,
    load_memory,
    occurrence_prob,
    record,
    refine_key,
    retrieve,
    route,
    save_memory,
)
from shared_code.models import EnvSpec, Scope, result

SCOPE = Scope(10, EnvSpec().all_ids())
R2 = Difference(Dimension.SPATIAL, result(1), Direction.APPEARED)
R3 = Difference(Dimension.SPATIAL, result(2), Direction.APPEARED)
R2_LATE = Difference(Dimension.TEMPORAL, result(1), Direction.APPEARED, delta_magnitude=0.5)
A = "enable:f2"
B = "enable:f3"


def _set(*items):
    return DifferenceSet(tuple(items), SCOPE, 0, 1)


def _record(mem, action, delta=R2, times=1, scenario=Scenario()):
    for _ in range(times):
        record(mem, action, [delta.signature], scenario, _set(delta))
    return mem


def _stores_holding(mem, action, feedback):
    return [
        kind for kind in StoreKind if any(r.pair == (action, feedback) for r in mem.records_in(kind))
    ]


def test_first_pair_lands_in_obvious_store():
    mem = _record(MixedMemory(), A)

    assert mem.store_of(A, (R2.signature,)) is StoreKind.OBVIOUS
    assert len(mem.records_in(StoreKind.OBVIOUS)) == 1


def test_frequent_pair_migrates_to_parametric():
    mem = MixedMemory(epsilon=0.05)
    for _ in range(50):
        _record(mem, A)
        _record(mem, B, R3)

    assert mem.total_events == 100
    assert occurrence_prob(mem, A, (R2.signature,)) == 0.5
    assert mem.store_of(A, (R2.signature,)) is StoreKind.PARAMETRIC


def test_empty_difference_set_has_no_key():
    with pytest.raises(NoKeyError):
        record(MixedMemory(), A, [R2.signature], Scenario(), _set())


def test_occurrence_prob():
    mem = _record(_record(MixedMemory(), B, R3, times=95), A, times=5)

    assert occurrence_prob(mem, A, (R2.signature,)) == 0.05
    assert occurrence_prob(mem, A, (R3.signature,)) == 0.0
    total = sum(occurrence_prob(mem, *pair) for pair in mem.pair_counts)
    assert total == pytest.approx(1.0)
    with pytest.raises(InsufficientDataError):
        occurrence_prob(MixedMemory(), A, (R2.signature,))


def test_route_boundaries():
    rare = _record(_record(MixedMemory(), B, R3, times=99), A)
    assert route(rare, A, (R2.signature,)) is StoreKind.OBVIOUS

    boundary = _record(_record(MixedMemory(), B, R3, times=95), A, times=5)
    assert route(boundary, A, (R2.signature,)) is StoreKind.PARAMETRIC

    sparse = _record(MixedMemory(), A, times=3)
    assert route(sparse, A, (R2.signature,)) is StoreKind.OBVIOUS


def test_pairs_migrate_as_probability_crosses_epsilon():
    mem = _record(MixedMemory(), B, R3, times=19)
    feedback = (R2.signature,)

    _record(mem, A)
    assert mem.store_of(A, feedback) is StoreKind.PARAMETRIC
    _record(mem, B, R3)
    assert mem.store_of(A, feedback) is StoreKind.OBVIOUS
    assert _stores_holding(mem, A, feedback) == [StoreKind.OBVIOUS]
    _record(mem, A)
    assert mem.store_of(A, feedback) is StoreKind.PARAMETRIC
    assert _stores_holding(mem, A, feedback) == [StoreKind.PARAMETRIC]


def test_every_pair_lives_in_exactly_one_store():
    mem = MixedMemory()
    pattern = [A, B, A, A, B, A, A, A] * 5 + [B] * 12
    for action in pattern:
        _record(mem, action, R2 if action == A else R3)
        for pair in mem.pair_counts:
            assert len(_stores_holding(mem, *pair)) == 1


def test_retrieve_returns_what_was_recorded():
    mem = _record(MixedMemory(), A)

    found = retrieve(mem, _set(R2))

    assert [r.pair for r in found] == [(A, (R2.signature,))]
    assert found[0].key == (R2.signature,)
    assert retrieve(mem, _set(R3)) == []
    assert retrieve(mem, _set()) == []


def test_retrieve_orders_by_evidence():
    mem = _record(_record(MixedMemory(), B, times=2), A, times=5)

    assert [r.evidence_count for r in retrieve(mem, _set(R2))] == [5, 2]


def test_assess_movability():
    rec = RelationshipRecord(key=(R2.signature,), action_sig=A, feedback=(R2.signature,), scenario=Scenario())

    assert assess_movability(rec, 3, 2) is Generality.GENERAL
    assert assess_movability(rec, 1, 2) is Generality.SPECIFIC
    with pytest.raises(MisuseError):
        assess_movability(rec, 3, 1)


def test_records_seen_in_several_scenarios_become_general():
    mem = _record(MixedMemory(), A, scenario=Scenario(time_bucket=0))
    assert retrieve(mem, _set(R2))[0].generality is Generality.SPECIFIC

    _record(mem, A, scenario=Scenario(time_bucket=1))
    assert retrieve(mem, _set(R2))[0].generality is Generality.GENERAL


def test_refine_key_adds_a_more_specific_record():
    mem = _record(MixedMemory(), A)

    compound = refine_key(mem, (R2.signature,), R2_LATE.signature)

    assert compound == (R2.signature, R2_LATE.signature)
    both = retrieve(mem, _set(R2, R2_LATE))
    assert [r.key for r in both] == [compound, (R2.signature,)]
    assert [r.key for r in retrieve(mem, _set(R2))] == [(R2.signature,)]
    with pytest.raises(UnknownIdentifierError):
        refine_key(mem, (R3.signature,), R2_LATE.signature)


def test_refined_key_gathers_evidence_when_extra_is_present():
    mem = _record(MixedMemory(), A)
    compound = refine_key(mem, (R2.signature,), R2_LATE.signature)

    record(mem, A, [R2.signature], Scenario(), _set(R2, R2_LATE))

    by_key = {r.key: r.evidence_count for r in retrieve(mem, _set(R2, R2_LATE))}
    assert by_key == {compound: 2, (R2.signature,): 2}


def test_snapshot_round_trip(tmp_path):
    mem = _record(_record(MixedMemory(), B, R3, times=12), A, times=3, scenario=Scenario(time_bucket=2))
    refine_key(mem, (R2.signature,), R2_LATE.signature)
    path = tmp_path / "nested" / "memory.jsonl"

    save_memory(mem, path)
    loaded = load_memory(path)

    assert loaded.total_events == mem.total_events
    assert loaded.pair_counts == mem.pair_counts
    for kind in StoreKind:
        original = {(r.key, r.pair, r.evidence_count, r.generality) for r in mem.records_in(kind)}
        restored = {(r.key, r.pair, r.evidence_count, r.generality) for r in loaded.records_in(kind)}
        assert restored == original
    assert len(path.read_text(encoding="utf-8").splitlines()) == len(mem.all_records())


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
