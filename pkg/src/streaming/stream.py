"""
Streaming group access.

A group stream interleaves the group runs of several shard files and exposes
only stream-level operations: buffered shuffling, repeating and batching into
cohorts. Nothing here offers random access to a group.
"""

import itertools
import logging
import queue
import threading
from collections import deque
from pathlib import Path
from typing import Callable, Iterable, Iterator, List, Optional, Sequence, TypeVar

import numpy as np

from ..config import config as base_config
from ..records import MAX_RECORD_BYTES, ShardReader
from ..seeding import get_rng
from .models import Cohort, EmptyGroupError, GroupDataset, StreamError

logger = logging.getLogger(__name__)

T = TypeVar("T")

_sentinel = object()
STARVATION_MIN_ITEMS = 100


def scan_shard(path: Path, max_record_bytes: int = MAX_RECORD_BYTES) -> Iterator[GroupDataset]:
    """Yield a lazy handle for every group run in one shard, in on-disk order."""
    for span in ShardReader(path, max_record_bytes).scan_groups():
        yield GroupDataset(
            key=span.key,
            shard_path=Path(path),
            offset=span.offset,
            count=span.count,
            max_record_bytes=max_record_bytes,
        )


def interleave(
    sources: Sequence[Callable[[], Iterable[T]]], cycle_length: int, block_length: int = 1
) -> Iterator[T]:
    """
    Round-robin over up to ``cycle_length`` open sources at a time.

    Each visit takes up to ``block_length`` items from a source. A source that
    runs dry is replaced in its slot by the next unopened one, so no source is
    opened before a slot frees up.
    """
    if cycle_length < 1 or block_length < 1:
        raise StreamError("interleave cycle and block lengths must be >= 1")
    pending = deque(sources)
    slots: List[Optional[Iterator[T]]] = []
    while pending and len(slots) < cycle_length:
        slots.append(iter(pending.popleft()()))

    while slots:
        position = 0
        while position < len(slots):
            iterator = slots[position]
            taken = 0
            while taken < block_length:
                try:
                    item = next(iterator)
                except StopIteration:
                    if taken == 0 and pending:
                        iterator = iter(pending.popleft()())
                        slots[position] = iterator
                        continue
                    iterator = None
                    break
                taken += 1
                yield item
            if iterator is None:
                if pending:
                    slots[position] = iter(pending.popleft()())
                    position += 1
                else:
                    slots.pop(position)
            else:
                position += 1


def buffered_shuffle(items: Iterable[T], buffer_size: int, rng: np.random.Generator) -> Iterator[T]:
    """
    Streaming shuffle with a buffer of ``buffer_size`` items.

    Once the buffer is full, each incoming item takes the place of a uniformly
    chosen buffered item, which is emitted. The remainder is drained in random
    order at the end of the input.
    """
    if buffer_size <= 0:
        yield from items
        return
    buffer: List[T] = []
    for item in items:
        if len(buffer) < buffer_size:
            buffer.append(item)
            continue
        slot = int(rng.integers(len(buffer)))
        yield buffer[slot]
        buffer[slot] = item
    while buffer:
        slot = int(rng.integers(len(buffer)))
        buffer[slot], buffer[-1] = buffer[-1], buffer[slot]
        yield buffer.pop()


class _Producer(threading.Thread):
    def __init__(self, source: Iterable, buffer: "queue.Queue", stop: threading.Event):
        super().__init__(daemon=True)
        self._source = source
        self._queue = buffer
        self._halt = stop

    def _put(self, item) -> bool:
        while not self._halt.is_set():
            try:
                self._queue.put(item, timeout=0.1)
                return True
            except queue.Full:
                continue
        return False

    def run(self):
        try:
            for item in self._source:
                if not self._put(item):
                    return
            self._put(_sentinel)
        except Exception as exc:
            self._put(exc)


def prefetch(items: Iterable[T], depth: int) -> Iterator[T]:
    """
    Fill a bounded queue of up to ``depth`` items from a background thread.

    Exceptions raised by the producer are re-raised in the consumer. Closing
    the returned generator stops the producer.
    """
    if depth <= 0:
        yield from items
        return
    buffer: "queue.Queue" = queue.Queue(depth)
    stop = threading.Event()
    producer = _Producer(items, buffer, stop)
    producer.start()
    served = starved = 0
    try:
        while True:
            if buffer.empty():
                starved += 1
            item = buffer.get()
            if item is _sentinel:
                return
            if isinstance(item, Exception):
                raise item
            served += 1
            yield item
    finally:
        stop.set()
        producer.join(timeout=1.0)
        if served >= STARVATION_MIN_ITEMS and starved > served // 2:
            logger.warning(
                "prefetch buffer was empty on %d of %d reads; the consumer outpaces shard reads",
                starved,
                served,
            )


class GroupStream:
    """
    Forward-only stream of groups built from shard files.

    Every full pass yields each group exactly once. Iterating again starts a
    new pass with the same order, which is a pure function of the shard list,
    the interleave settings, the shuffle buffer and the seed.
    """

    def __init__(
        self,
        shard_paths: Sequence[Path],
        interleave_cycle: int = 4,
        shuffle_buffer: int = 0,
        seed: int = 0,
        interleave_block: int = 1,
        prefetch_depth: int = 0,
        max_record_bytes: int = MAX_RECORD_BYTES,
    ):
        if interleave_cycle < 1:
            raise StreamError(f"interleave_cycle must be >= 1, got {interleave_cycle}")
        if interleave_block < 1:
            raise StreamError(f"interleave_block must be >= 1, got {interleave_block}")
        if shuffle_buffer < 0:
            raise StreamError(f"shuffle_buffer must be >= 0, got {shuffle_buffer}")
        self.shard_paths = [Path(p) for p in shard_paths]
        self.interleave_cycle = interleave_cycle
        self.interleave_block = interleave_block
        self.shuffle_buffer = shuffle_buffer
        self.seed = seed
        self.prefetch_depth = prefetch_depth
        self.max_record_bytes = max_record_bytes

    def _groups(self) -> Iterator[GroupDataset]:
        sources = [
            (lambda p=path: scan_shard(p, self.max_record_bytes)) for path in self.shard_paths
        ]
        groups = interleave(sources, self.interleave_cycle, self.interleave_block)
        if self.shuffle_buffer > 0:
            groups = buffered_shuffle(groups, self.shuffle_buffer, get_rng(self.seed, "shuffle"))
        return groups

    def __iter__(self) -> Iterator[GroupDataset]:
        return prefetch(self._groups(), self.prefetch_depth)

    def repeat(self, count: Optional[int] = None) -> Iterator[GroupDataset]:
        """Chain ``count`` passes over the stream (forever when ``count`` is None)."""
        passes = itertools.count() if count is None else range(count)
        for _ in passes:
            yield from self


def build_group_stream(
    dataset,
    interleave_cycle: Optional[int] = None,
    shuffle_buffer: int = 0,
    seed: int = 0,
    interleave_block: Optional[int] = None,
    prefetch_depth: Optional[int] = None,
) -> GroupStream:
    """
    Build the group stream of a partitioned dataset.

    Args:
        dataset: PartitionedDataset to read
        interleave_cycle: Number of shards read concurrently
        shuffle_buffer: Buffered-shuffle size over groups (0 disables shuffling)
        seed: Root seed; the shuffle uses its "shuffle" sub-stream
        interleave_block: Groups taken from a shard per visit
        prefetch_depth: Groups decoded ahead of the consumer (0 disables)

    Returns:
        GroupStream over the dataset's shards
    """
    if interleave_cycle is None:
        interleave_cycle = int(base_config["interleave_cycle"])
    if interleave_block is None:
        interleave_block = int(base_config["interleave_block"])
    if prefetch_depth is None:
        prefetch_depth = int(base_config["prefetch_depth"])
    return GroupStream(
        dataset.shard_paths,
        interleave_cycle=interleave_cycle,
        shuffle_buffer=shuffle_buffer,
        seed=seed,
        interleave_block=interleave_block,
        prefetch_depth=prefetch_depth,
        max_record_bytes=int(base_config["max_record_mb"]) << 20,
    )


def take_repeat(group: Iterable[T], n: int) -> Iterator[T]:
    """Yield exactly ``n`` examples, cycling through ``group`` as needed."""
    if n < 1:
        raise StreamError(f"take_repeat needs n >= 1, got {n}")
    if hasattr(group, "__len__") and len(group) == 0:
        raise EmptyGroupError(f"group {getattr(group, 'key', '')!r} has no examples")
    return _take_repeat(group, n)


def _take_repeat(group: Iterable[T], n: int) -> Iterator[T]:
    emitted = 0
    while True:
        seen = False
        for example in group:
            seen = True
            yield example
            emitted += 1
            if emitted == n:
                return
        if not seen:
            raise EmptyGroupError("group has no examples")


def batch_cohorts(groups: Iterable[GroupDataset], cohort_size: int) -> Iterator[Cohort]:
    """Consecutive non-overlapping windows of ``cohort_size`` groups; the last may be short."""
    if cohort_size < 1:
        raise StreamError(f"cohort_size must be >= 1, got {cohort_size}")
    iterator = iter(groups)
    while True:
        window = list(itertools.islice(iterator, cohort_size))
        if not window:
            return
        yield Cohort(groups=window)
