from __future__ import annotations

import random
from types import SimpleNamespace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mlcasim.core import PolicyId
from mlcasim.metrics import (
    CHECKPOINTS_KM,
    CheckpointTable,
    TrialSummary,
    aggregate_checkpoints,
    average_trials,
    round_half_up,
)


def ev(vehicle, km):
    return SimpleNamespace(vehicle=vehicle, odometer=km * 1000.0)


def brute(events, ids, cps=CHECKPOINTS_KM):
    return tuple(sum(1 for e in events if e.vehicle in ids and e.odometer / 1000.0 <= c) for c in cps)


def summary(counts, collisions=0, seed=0):
    return TrialSummary(PolicyId.MLCA, 1, seed, CheckpointTable(tuple(counts)), collisions)


class TestAggregate:
    def test_no_events(self):
        assert aggregate_checkpoints([], [0]).counts == (0, 0, 0, 0)

    def test_one_av(self):
        events = [ev(0, km) for km in (4.2, 9.9, 14.1, 19.8)]
        assert aggregate_checkpoints(events, [0]).counts == (1, 2, 3, 4)

    def test_three_avs_summed(self):
        events = [ev(0, 4.2), ev(1, 7.0), ev(1, 12.0), ev(2, 18.0)]
        assert aggregate_checkpoints(events, [0, 1, 2]).counts == (1, 2, 3, 4)

    def test_boundary_is_inclusive(self):
        assert aggregate_checkpoints([ev(0, 5.0)], [0]).counts == (1, 1, 1, 1)

    def test_beyond_last_checkpoint_dropped(self):
        assert aggregate_checkpoints([ev(0, 20.001)], [0]).counts == (0, 0, 0, 0)

    def test_untracked_ignored(self):
        assert aggregate_checkpoints([ev(0, 1.0), ev(9, 1.0)], [0]).total == 1

    def test_from_log_uses_counted_changes(self):
        log = SimpleNamespace(tracked_ids=[3], counted_lane_changes=lambda: [ev(3, 2.0), ev(3, 11.0)])
        assert aggregate_checkpoints(log).counts == (1, 1, 2, 2)

    def test_matches_brute_force(self):
        rng = random.Random(23)
        for _ in range(50):
            events = [ev(rng.randrange(6), rng.uniform(0, 25)) for _ in range(rng.randint(0, 1000))]
            ids = set(rng.sample(range(6), rng.randint(1, 3)))
            assert aggregate_checkpoints(events, ids).counts == brute(events, ids)

    @given(st.lists(st.tuples(st.integers(0, 3), st.floats(0, 30)), max_size=200))
    def test_monotone(self, raw):
        counts = aggregate_checkpoints([ev(v, km) for v, km in raw], [0, 1, 2, 3]).counts
        assert all(a <= b for a, b in zip(counts, counts[1:]))


class TestCheckpointTable:
    def test_decreasing_rejected(self):
        with pytest.raises(ValueError):
            CheckpointTable((1, 0, 2, 3))

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            CheckpointTable((1, 2))


class TestAverage:
    def test_identical(self):
        s = summary((1, 2, 3, 4), 1)
        avg = average_trials([s, s, s])
        assert avg.table.counts == (1, 2, 3, 4) and avg.collisions == 1

    def test_half_rounds_up(self):
        avg = average_trials([summary((0, 0, 0, 4)), summary((0, 0, 0, 5))])
        assert avg.table.counts[-1] == 4.5 and avg.presented[-1] == 5

    def test_collisions_third(self):
        avg = average_trials([summary((0,) * 4, c) for c in (0, 0, 1)])
        assert avg.collisions == pytest.approx(1 / 3) and avg.presented_collisions == 0
        assert avg.collisions_per_100 == pytest.approx(100 / 3)

    def test_empty(self):
        with pytest.raises(ValueError):
            average_trials([])

    def test_mixed_checkpoints(self):
        other = TrialSummary(None, 1, 0, CheckpointTable((0, 0), (1.0, 2.0)), 0)
        with pytest.raises(ValueError):
            average_trials([summary((0,) * 4), other])

    def test_negative_collisions(self):
        with pytest.raises(ValueError):
            summary((0,) * 4, -1)

    @given(st.lists(st.tuples(st.lists(st.integers(0, 5), min_size=4, max_size=4), st.integers(0, 4)),
                    min_size=1, max_size=30), st.randoms())
    def test_permutation_invariant(self, raw, rnd):
        items = []
        for steps, col in raw:
            acc, counts = 0, []
            for s in steps:
                acc += s
                counts.append(acc)
            items.append(summary(counts, col))
        shuffled = items[:]
        rnd.shuffle(shuffled)
        assert average_trials(items) == average_trials(shuffled)


@pytest.mark.parametrize("x,want", [(0.5, 1), (1.5, 2), (2.5, 3), (2.4999, 2), (0.0, 0)])
def test_round_half_up(x, want):
    assert round_half_up(x) == want
