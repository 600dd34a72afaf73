"""State-table behavior.

The equivalence tests lean on the synthetic-world separation invariant: all
distinct calls encode at cosine <= 0.85 apart, so for thresholds above 0.85 a
cosine match means literal call equality and the equality-based matcher in
tests/oracles.py is an exact oracle.
"""

import math

import numpy as np
import pytest

from chainwatch.monitor import (
    DEFAULT_COSINE_THRESHOLD,
    EventKind,
    MonitorError,
    StateTable,
    cosine,
)
from chainwatch.fingerprints import FingerprintDb
from chainwatch.synthgen import mixed_trace

from .oracles import NaiveChainMatcher


def test_default_threshold():
    assert DEFAULT_COSINE_THRESHOLD == 0.9


class TestCosine:
    def test_matches_manual_formula(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            a = rng.standard_normal(151)
            b = rng.standard_normal(151)
            expect = float(np.dot(a, b)) / (
                math.sqrt(float(np.dot(a, a))) * math.sqrt(float(np.dot(b, b)))
            )
            assert cosine(a, b) == pytest.approx(expect, abs=1e-12)

    def test_zero_norm(self):
        assert cosine(np.zeros(4), np.ones(4)) == 0.0
        assert cosine(np.ones(4), np.zeros(4)) == 0.0

    def test_identical_vectors(self):
        a = np.random.default_rng(0).standard_normal(151)
        assert cosine(a, a) == pytest.approx(1.0, abs=1e-12)
        assert cosine(a, a) <= 1.0  # clamped

    def test_shape_mismatch(self):
        with pytest.raises(MonitorError):
            cosine(np.zeros(3), np.zeros(4))
        with pytest.raises(MonitorError):
            cosine(np.zeros((2, 2)), np.zeros((2, 2)))


def test_empty_db_rejected():
    with pytest.raises(MonitorError, match="empty"):
        StateTable(FingerprintDb(fingerprints={}))


def test_advance_alarm_reset(sql_db):
    """Feeding the exact chain walks 0 -> 1 -> 2 -> alarm -> back to 0."""
    table = StateTable(sql_db)
    vecs = sql_db[0].template_vectors
    assert table.next_index(0) == 0

    events = table.step([0], vecs[0], trace_offset=0)
    assert [e.kind for e in events] == [EventKind.ADVANCED]
    assert table.next_index(0) == 1

    events = table.step([0], vecs[1], trace_offset=1)
    assert events[0].kind == EventKind.ADVANCED
    assert table.next_index(0) == 2

    events = table.step([0], vecs[2], trace_offset=2)
    assert events[0].kind == EventKind.ALARM
    assert events[0].exploit_id == 0
    assert events[0].cwe_id == "CWE-89"
    assert events[0].trace_offset == 2
    assert events[0].similarity == pytest.approx(1.0, abs=1e-12)
    assert table.next_index(0) == 0  # rewound
    assert table.alarms_raised(0) == 1
    assert table.total_alarms == 1


def test_repeated_chain_alarms_again(sql_db):
    table = StateTable(sql_db)
    vecs = sql_db[0].template_vectors
    for _ in range(3):
        for off, v in enumerate(vecs):
            table.step([0], v, off)
    assert table.alarms_raised(0) == 3


def test_no_match_leaves_state(sql_db):
    table = StateTable(sql_db)
    vecs = sql_db[0].template_vectors
    events = table.step([0], vecs[2], trace_offset=0)  # sink first: wrong order
    assert events[0].kind == EventKind.NO_MATCH
    assert table.next_index(0) == 0


def test_out_of_order_chain_never_alarms(sql_db):
    table = StateTable(sql_db)
    vecs = sql_db[0].template_vectors
    for off, v in enumerate([vecs[2], vecs[1], vecs[0]]):
        events = table.step([0], v, off)
        assert events[0].kind != EventKind.ALARM
    assert table.total_alarms == 0


def test_non_candidates_untouched(small_db, encoder, small_world):
    table = StateTable(small_db)
    first = small_world.chains[0][0]
    table.step([0], encoder.encode(first), 0)
    assert table.next_index(0) == 1
    for eid in small_db.exploit_ids[1:]:
        assert table.comparisons_made(eid) == 0


def test_events_sorted_and_one_per_candidate(small_db, encoder):
    table = StateTable(small_db)
    x = encoder.encode(small_db[3].templates[0])
    events = table.step([5, 0, 3, 1], x, 7)
    assert [e.exploit_id for e in events] == [0, 1, 3, 5]
    assert all(e.trace_offset == 7 for e in events)
    assert table.total_comparisons == 4


def test_duplicate_candidates_collapse(small_db, encoder):
    table = StateTable(small_db)
    x = encoder.encode(small_db[0].templates[0])
    events = table.step([0, 0, 0], x, 0)
    assert len(events) == 1
    assert table.total_comparisons == 1


def test_unknown_candidate_rejected(sql_db):
    table = StateTable(sql_db)
    with pytest.raises(MonitorError, match="candidate"):
        table.step([42], np.zeros(151), 0)


def test_threshold_validation(sql_db):
    table = StateTable(sql_db)
    for bad in (0.0, -0.1, 1.0001):
        with pytest.raises(MonitorError, match="threshold"):
            table.step([0], np.zeros(151), 0, threshold=bad)
    # 1.0 is legal (inclusive upper end)
    table.step([0], np.zeros(151), 0, threshold=1.0)


def test_bad_vector_shape(sql_db):
    table = StateTable(sql_db)
    with pytest.raises(MonitorError, match="shape"):
        table.step([0], np.zeros(150), 0)


def test_counters(sql_db):
    table = StateTable(sql_db)
    with pytest.raises(MonitorError):
        table.comparisons_per_call()
    vecs = sql_db[0].template_vectors
    table.step([0], vecs[0], 0)
    table.step([], vecs[1], 1)  # step with no candidates still counts as a step
    table.step([0], vecs[1], 2)
    assert table.steps_taken == 3
    assert table.total_comparisons == 2
    assert table.comparisons_per_call() == pytest.approx(2 / 3)
    assert table.comparisons_made(0) == 2


def test_clone_is_independent(sql_db):
    table = StateTable(sql_db)
    vecs = sql_db[0].template_vectors
    table.step([0], vecs[0], 0)
    dup = table.clone()
    assert dup.next_index(0) == 1
    assert dup.total_comparisons == table.total_comparisons
    table.step([0], vecs[1], 1)
    assert table.next_index(0) == 2
    assert dup.next_index(0) == 1  # unaffected


def test_candidate_filtering_is_sound(small_world, small_db, encoder):
    """Stepping a subset must move those exploits exactly as the full set does.

    This is the property that makes classifier gating safe: per-exploit
    transitions depend only on that exploit's own state and the input vector.
    """
    rng = np.random.default_rng(99)
    calls = mixed_trace(small_world, rng, length=40, plant=2)
    full = StateTable(small_db)
    part = StateTable(small_db)
    subset = [0, 2, 4]
    for off, call in enumerate(calls):
        x = encoder.encode(call)
        full.step(small_db.exploit_ids, x, off)
        part.step(subset, x, off)
    for eid in subset:
        assert part.next_index(eid) == full.next_index(eid)
        assert part.alarms_raised(eid) == full.alarms_raised(eid)
    for eid in set(small_db.exploit_ids) - set(subset):
        assert part.comparisons_made(eid) == 0


def _alarmed_set(world, db, encoder, seed, threshold):
    rng = np.random.default_rng(seed)
    calls = mixed_trace(world, rng, length=60, plant=3)
    table = StateTable(db)
    alarmed = set()
    for off, call in enumerate(calls):
        for ev in table.step(db.exploit_ids, encoder.encode(call), off, threshold=threshold):
            if ev.kind == EventKind.ALARM:
                alarmed.add(ev.exploit_id)
    return alarmed


def test_threshold_antitonicity_of_alarmed_sets(small_world, small_db, encoder):
    """Raising the threshold never alarms a new exploit.

    Stated over the set of alarmed exploits per trace.  The per-offset version
    is false: a sub-threshold match that fails at the higher threshold can
    leave the index mid-chain instead of resetting, shifting later alarm
    offsets around.
    """
    grid = [0.7, 0.8, 0.86, 0.9, 0.95, 1.0]
    saw_any = False
    for seed in range(1000, 1010):
        sets = {th: _alarmed_set(small_world, small_db, encoder, seed, th) for th in grid}
        saw_any = saw_any or any(sets.values())
        for lo, hi in zip(grid, grid[1:]):
            assert sets[hi] <= sets[lo], (seed, lo, hi)
    assert saw_any  # the property must not pass vacuously


def test_matches_equality_oracle_on_separated_world(small_world, small_db, encoder):
    """Cosine monitor == exact-equality matcher when calls are well separated."""
    for seed in (5, 6, 7, 8):
        rng = np.random.default_rng(seed)
        calls = mixed_trace(small_world, rng, length=80, plant=3)
        for threshold in (0.86, 0.9, 0.99):
            table = StateTable(small_db)
            got = []
            for off, call in enumerate(calls):
                for ev in table.step(small_db.exploit_ids, encoder.encode(call), off, threshold=threshold):
                    if ev.kind == EventKind.ALARM:
                        got.append((ev.exploit_id, ev.trace_offset))
            expect = NaiveChainMatcher(small_world.chains).run(calls)
            assert got == expect, (seed, threshold)
