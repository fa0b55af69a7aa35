"""
Tests for group streams and their stream-level operations.
"""

import logging
import threading
import time

import numpy as np
import pytest

from src.partition import PartitionConfig, PartitionStrategy, partition_corpus
from src.streaming import (
    Cohort,
    EmptyGroupError,
    GroupStream,
    StreamError,
    batch_cohorts,
    buffered_shuffle,
    build_group_stream,
    interleave,
    prefetch,
    scan_shard,
    take_repeat,
)


@pytest.fixture
def wide_dataset(tmp_path, jsonl_corpus):
    """Forty groups of three examples over four shards."""
    config = PartitionConfig(
        strategy=PartitionStrategy.by_feature("domain"), seed=0, num_shards=4
    )
    return partition_corpus(jsonl_corpus(num_groups=40, per_group=3), config, tmp_path / "wide")


def _keys(groups):
    return [group.key for group in groups]


class TestInterleave:
    """Round-robin interleaving of sources"""

    def test_exhausted_source_is_replaced_in_place(self):
        """Test that a finished source is replaced in its slot"""
        sources = [
            lambda: ["a1", "a2", "a3"],
            lambda: ["b1"],
            lambda: ["c1", "c2"],
        ]
        assert list(interleave(sources, cycle_length=2)) == ["a1", "b1", "a2", "c1", "a3", "c2"]

    def test_cycle_one_is_sequential(self):
        """Test that a cycle length of one reads sources in turn"""
        sources = [lambda: [1, 2], lambda: [3], lambda: [4, 5]]
        assert list(interleave(sources, cycle_length=1)) == [1, 2, 3, 4, 5]

    def test_block_length(self):
        """Test block length handling"""
        sources = [lambda: [1, 2, 3, 4], lambda: [5, 6, 7]]
        assert list(interleave(sources, cycle_length=2, block_length=2)) == [1, 2, 5, 6, 3, 4, 7]

    def test_sources_open_lazily(self):
        """Test that sources are opened only when needed"""
        opened = []

        def source(name, items):
            def _open():
                opened.append(name)
                return items
            return _open

        stream = interleave([source("a", [1]), source("b", [2]), source("c", [3])], cycle_length=2)
        assert next(stream) == 1
        assert opened == ["a", "b"]

    def test_invalid_cycle(self):
        """Test an invalid cycle length"""
        with pytest.raises(StreamError):
            list(interleave([lambda: [1]], cycle_length=0))


class TestBufferedShuffle:
    """Streaming shuffle"""

    def test_is_a_permutation(self):
        """Test that shuffling keeps every item exactly once"""
        items = list(range(100))
        shuffled = list(buffered_shuffle(items, 10, np.random.default_rng(0)))
        assert sorted(shuffled) == items
        assert shuffled != items

    def test_same_rng_seed_same_order(self):
        """Test that a seed fixes the order"""
        first = list(buffered_shuffle(range(50), 8, np.random.default_rng(4)))
        second = list(buffered_shuffle(range(50), 8, np.random.default_rng(4)))
        assert first == second

    def test_zero_buffer_is_identity(self):
        """Test that a zero buffer keeps input order"""
        assert list(buffered_shuffle(range(5), 0, np.random.default_rng(0))) == [0, 1, 2, 3, 4]

    def test_buffer_larger_than_input(self):
        """Test a buffer larger than the input"""
        shuffled = list(buffered_shuffle(range(5), 100, np.random.default_rng(1)))
        assert sorted(shuffled) == [0, 1, 2, 3, 4]


class TestPrefetch:
    """Background prefetching"""

    def test_preserves_order(self):
        """Test that prefetching keeps order"""
        assert list(prefetch(iter(range(20)), depth=3)) == list(range(20))

    def test_depth_zero_passes_through(self):
        """Test that depth zero disables the producer thread"""
        assert list(prefetch([1, 2], depth=0)) == [1, 2]

    def test_producer_exception_reaches_consumer(self):
        """Test that producer errors are raised in the consumer"""
        def failing():
            yield 1
            raise RuntimeError("boom")

        consumer = prefetch(failing(), depth=2)
        assert next(consumer) == 1
        with pytest.raises(RuntimeError, match="boom"):
            next(consumer)

    def test_closing_early_stops_producer(self):
        """Test that closing the consumer stops the producer"""
        consumer = prefetch(iter(range(10_000)), depth=2)
        assert next(consumer) == 0
        consumer.close()

    def test_full_pass_joins_producer(self):
        """Test that draining the buffer to exhaustion finishes the producer thread"""
        before = set(threading.enumerate())
        assert list(prefetch(iter(range(500)), depth=2)) == list(range(500))
        leftover = [t for t in set(threading.enumerate()) - before if t.is_alive()]
        assert leftover == []

    def test_slow_producer_is_reported(self, caplog):
        """Test that a stalled producer is reported"""
        def slow():
            for i in range(120):
                time.sleep(0.001)
                yield i

        with caplog.at_level(logging.WARNING, logger="src.streaming.stream"):
            assert list(prefetch(slow(), depth=4)) == list(range(120))
        assert "prefetch buffer was empty" in caplog.text


class TestGroupStream:
    """Streams over partitioned datasets"""

    def test_every_group_exactly_once(self, wide_dataset):
        """Test that a pass yields every group exactly once"""
        keys = _keys(build_group_stream(wide_dataset))
        assert len(keys) == 40
        assert sorted(keys) == sorted({f"g{i:03d}".encode() for i in range(40)})

    def test_groups_hold_their_examples(self, dataset):
        """Test that each group holds its own examples"""
        for group in build_group_stream(dataset):
            assert len(group) == 4
            assert len(list(group)) == 4
            assert list(group) == list(group.examples())

    def test_passes_repeat_the_same_order(self, wide_dataset):
        """Test that passes with one seed repeat the order"""
        stream = build_group_stream(wide_dataset, shuffle_buffer=16, seed=3)
        assert _keys(stream) == _keys(stream)

    def test_seed_changes_shuffled_order(self, wide_dataset):
        """Test that another seed reorders groups"""
        first = _keys(build_group_stream(wide_dataset, shuffle_buffer=40, seed=1))
        second = _keys(build_group_stream(wide_dataset, shuffle_buffer=40, seed=2))
        assert sorted(first) == sorted(second)
        assert first != second

    def test_prefetch_does_not_change_order(self, wide_dataset):
        """Test that prefetching leaves the order unchanged"""
        plain = _keys(build_group_stream(wide_dataset, shuffle_buffer=8, seed=5, prefetch_depth=0))
        ahead = _keys(build_group_stream(wide_dataset, shuffle_buffer=8, seed=5, prefetch_depth=4))
        assert plain == ahead

    def test_prefetched_passes_run_to_exhaustion(self, wide_dataset):
        """Test repeated full passes through the background prefetch thread"""
        stream = build_group_stream(wide_dataset, shuffle_buffer=8, seed=2, prefetch_depth=2)
        first = _keys(stream)
        assert len(first) == 40
        assert _keys(stream) == first
        assert len(_keys(stream.repeat(2))) == 80

    def test_repeat(self, dataset):
        """Test repeated passes"""
        stream = build_group_stream(dataset)
        one_pass = _keys(stream)
        assert _keys(stream.repeat(2)) == one_pass + one_pass

    def test_empty_dataset(self, tmp_path):
        """Test streaming an empty dataset"""
        config = PartitionConfig(strategy=PartitionStrategy.by_feature("domain"), num_shards=2)
        empty = partition_corpus([], config, tmp_path / "empty")
        assert list(build_group_stream(empty)) == []

    def test_scan_shard_matches_manifest(self, dataset):
        """Test that shard scans agree with the manifest"""
        for info, path in zip(dataset.manifest.per_shard, dataset.shard_paths):
            groups = list(scan_shard(path))
            assert len(groups) == info.num_groups
            assert sum(len(g) for g in groups) == info.num_examples

    def test_invalid_arguments(self, dataset):
        """Test argument validation"""
        with pytest.raises(StreamError):
            GroupStream(dataset.shard_paths, interleave_cycle=0)
        with pytest.raises(StreamError):
            GroupStream(dataset.shard_paths, shuffle_buffer=-1)


class TestTakeRepeat:
    """Fixed-size client datasets"""

    def test_cycles_to_exactly_n(self):
        """Test cycling a short group to exactly n examples"""
        assert list(take_repeat(["e1", "e2", "e3"], 7)) == ["e1", "e2", "e3", "e1", "e2", "e3", "e1"]

    def test_truncates(self):
        """Test truncating a long group"""
        assert list(take_repeat(["e1", "e2", "e3"], 2)) == ["e1", "e2"]

    def test_empty_group(self):
        """Test an empty group"""
        with pytest.raises(EmptyGroupError):
            take_repeat([], 3)

    def test_n_must_be_positive(self):
        """Test a non-positive count"""
        with pytest.raises(StreamError):
            take_repeat(["e1"], 0)

    def test_on_group_handles(self, dataset):
        """Test take_repeat on streamed group handles"""
        group = next(iter(build_group_stream(dataset)))
        taken = list(take_repeat(group, 10))
        examples = list(group)
        assert taken == (examples * 3)[:10]


class TestBatchCohorts:
    """Cohort windows"""

    def test_windows(self):
        """Test cohort windows"""
        cohorts = list(batch_cohorts(range(10), 4))
        assert [c.groups for c in cohorts] == [[0, 1, 2, 3], [4, 5, 6, 7], [8, 9]]
        assert all(isinstance(c, Cohort) for c in cohorts)

    def test_cohort_keys(self, dataset):
        """Test the keys of each cohort"""
        [cohort] = list(batch_cohorts(build_group_stream(dataset), 6))
        assert len(cohort) == 6
        assert sorted(cohort.keys) == [f"g{i:03d}".encode() for i in range(6)]

    def test_invalid_size(self):
        """Test a non-positive cohort size"""
        with pytest.raises(StreamError):
            list(batch_cohorts([1, 2], 0))
