"""
Data models for group access.

This module defines the group handle shared by every backend, cohorts,
benchmark options and the benchmark report.
"""

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List

import numpy as np

from ..errors import GrouperError
from ..records import MAX_RECORD_BYTES, ShardReader

BACKENDS = ("in_memory", "hierarchical", "streaming")
INDEX_NAME = "group_index.bin"


class StreamError(GrouperError):
    """Base exception for group access errors."""
    pass


class EmptyGroupError(StreamError, ValueError):
    """Raised when examples are requested from a group with none."""
    pass


class MemoryBudgetExceededError(StreamError):
    """Raised when an in-memory load would exceed its byte budget."""
    pass


class UnknownGroupError(StreamError, KeyError):
    """Raised when a key is not present in the group index."""

    def __init__(self, key: bytes):
        super().__init__(key)
        self.key = key

    def __str__(self) -> str:
        return f"no group with key {self.key!r}"


class IndexMissingError(StreamError):
    """Raised when a hierarchical lookup is attempted before the index is built."""
    pass


@dataclass(frozen=True)
class GroupDataset:
    """
    One group's examples, read lazily from its run in a shard file.

    Iterating never holds more than one example in memory, and the handle can
    be iterated again from the start.
    """
    key: bytes
    shard_path: Path
    offset: int
    count: int
    max_record_bytes: int = MAX_RECORD_BYTES

    def __iter__(self) -> Iterator[bytes]:
        return ShardReader(self.shard_path, self.max_record_bytes).read_group(
            self.offset, self.count
        )

    def __len__(self) -> int:
        return self.count

    def examples(self) -> Iterator[bytes]:
        return iter(self)


@dataclass
class Cohort:
    """One window of the group stream."""
    groups: List[Any]

    def __len__(self) -> int:
        return len(self.groups)

    @property
    def keys(self) -> List[bytes]:
        return [group.key for group in self.groups]


@dataclass
class BenchOptions:
    """Knobs of the iteration benchmark."""
    timeout_s: float = 7200.0
    sample_interval_s: float = 0.01
    in_memory_budget_bytes: int = 1024 << 20
    interleave_cycle: int = 4
    shuffle_buffer: int = 1024
    seed: int = 0


@dataclass
class TrialResult:
    trial: int
    examples_seen: int
    elapsed_seconds: float
    setup_seconds: float
    peak_memory_bytes: int
    timed_out: bool = False


@dataclass
class BenchReport:
    """Aggregated timings and peak memory of one backend over all trials."""
    backend: str
    examples_seen: int
    elapsed_seconds: float
    elapsed_std: float
    peak_memory_bytes: int
    peak_memory_std: float
    trials: List[TrialResult] = field(default_factory=list)
    timed_out: bool = False

    @classmethod
    def from_trials(cls, backend: str, trials: List[TrialResult]) -> "BenchReport":
        completed = [t for t in trials if not t.timed_out] or trials
        times = [t.elapsed_seconds for t in completed]
        peaks = [float(t.peak_memory_bytes) for t in completed]
        return cls(
            backend=backend,
            examples_seen=completed[0].examples_seen if completed else 0,
            elapsed_seconds=float(np.mean(times)) if times else 0.0,
            elapsed_std=float(np.std(times)) if times else 0.0,
            peak_memory_bytes=int(round(np.mean(peaks))) if peaks else 0,
            peak_memory_std=float(np.std(peaks)) if peaks else 0.0,
            trials=list(trials),
            timed_out=any(t.timed_out for t in trials),
        )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

