"""
Group access module.

Three ways to reach the groups of a partitioned dataset: the streaming group
stream, an in-memory mapping and a seek-based hierarchical index, plus the
benchmark harness that compares them.
"""

from .backends import GroupIndex, IndexEntry, build_index, load_in_memory, lookup_group, open_index
from .bench import MemorySampler, iterate_bench, run_trial, write_bench_csv, write_bench_json
from .models import (
    BACKENDS,
    INDEX_NAME,
    BenchOptions,
    BenchReport,
    Cohort,
    EmptyGroupError,
    GroupDataset,
    IndexMissingError,
    MemoryBudgetExceededError,
    StreamError,
    TrialResult,
    UnknownGroupError,
)
from .stream import (
    GroupStream,
    batch_cohorts,
    buffered_shuffle,
    build_group_stream,
    interleave,
    prefetch,
    scan_shard,
    take_repeat,
)

__all__ = [
    "BACKENDS",
    "INDEX_NAME",
    "BenchOptions",
    "BenchReport",
    "Cohort",
    "EmptyGroupError",
    "GroupDataset",
    "GroupIndex",
    "GroupStream",
    "IndexEntry",
    "IndexMissingError",
    "MemoryBudgetExceededError",
    "MemorySampler",
    "StreamError",
    "TrialResult",
    "UnknownGroupError",
    "batch_cohorts",
    "buffered_shuffle",
    "build_group_stream",
    "build_index",
    "interleave",
    "iterate_bench",
    "load_in_memory",
    "lookup_group",
    "open_index",
    "prefetch",
    "run_trial",
    "scan_shard",
    "take_repeat",
    "write_bench_csv",
    "write_bench_json",
]
