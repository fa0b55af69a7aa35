"""
Iteration benchmark harness.

Each trial visits every example of a dataset through one backend, serially,
while a background thread samples the process resident set.
"""

import csv
import gc
import io
import json
import logging
import os
import threading
import time
import tracemalloc
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import psutil

from ..seeding import derive_seed, get_rng
from .backends import build_index, index_path, load_in_memory, lookup_group, open_index
from .models import BACKENDS, BenchOptions, BenchReport, StreamError, TrialResult
from .stream import build_group_stream

logger = logging.getLogger(__name__)

TRIAL_FIELDS = [
    "backend",
    "trial",
    "examples_seen",
    "elapsed_seconds",
    "setup_seconds",
    "peak_memory_bytes",
    "timed_out",
]


class MemorySampler:
    """
    Tracks the peak memory of this process across a ``with`` block.

    A background thread samples the resident set while ``tracemalloc``
    records the Python allocator's high-water mark; the peak is the larger
    of the RSS rise and the traced peak.
    """

    def __init__(self, interval_s: float = 0.01):
        self.interval_s = float(interval_s)
        self._stop_sampling = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self._process = psutil.Process(os.getpid())
        self._owns_tracing = False
        self._traced_start = 0
        self.rss_start = 0
        self.rss_peak = 0
        self.traced_peak = 0

    def _sample(self) -> None:
        rss = int(self._process.memory_info().rss)
        if rss > self.rss_peak:
            self.rss_peak = rss

    def _run(self) -> None:
        while not self._stop_sampling.wait(self.interval_s):
            self._sample()

    def __enter__(self) -> "MemorySampler":
        if tracemalloc.is_tracing():
            tracemalloc.reset_peak()
        else:
            tracemalloc.start()
            self._owns_tracing = True
        self._traced_start, _ = tracemalloc.get_traced_memory()
        self.rss_start = int(self._process.memory_info().rss)
        self.rss_peak = self.rss_start
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self._stop_sampling.set()
        if self._thread is not None:
            self._thread.join(timeout=1.0)
        self._sample()
        _, peak = tracemalloc.get_traced_memory()
        self.traced_peak = max(0, peak - self._traced_start)
        if self._owns_tracing:
            tracemalloc.stop()
            self._owns_tracing = False

    @property
    def peak_bytes(self) -> int:
        return max(self.rss_peak - self.rss_start, self.traced_peak)


class _Deadline:
    def __init__(self, timeout_s: float):
        self.start = time.perf_counter()
        self.timeout_s = timeout_s

    def expired(self) -> bool:
        return time.perf_counter() - self.start > self.timeout_s


def _drain(groups: Iterable[Iterable[bytes]], deadline: _Deadline) -> Tuple[int, bool]:
    seen = 0
    for group in groups:
        for _ in group:
            seen += 1
        if deadline.expired():
            return seen, True
    return seen, False


def _streaming_trial(dataset, options: BenchOptions, trial: int) -> Tuple[int, bool, float]:
    stream = build_group_stream(
        dataset,
        interleave_cycle=options.interleave_cycle,
        shuffle_buffer=options.shuffle_buffer,
        seed=derive_seed(options.seed, "bench", trial),
        prefetch_depth=0,
    )
    seen, timed_out = _drain(stream, _Deadline(options.timeout_s))
    return seen, timed_out, 0.0


def _in_memory_trial(dataset, options: BenchOptions, trial: int) -> Tuple[int, bool, float]:
    setup_start = time.perf_counter()
    groups = load_in_memory(dataset, options.in_memory_budget_bytes)
    setup_seconds = time.perf_counter() - setup_start

    keys = list(groups)
    order = get_rng(options.seed, "bench", trial).permutation(len(keys))
    deadline = _Deadline(options.timeout_s)
    seen, timed_out = _drain((groups[keys[i]] for i in order), deadline)
    del groups
    return seen, timed_out, setup_seconds


def _hierarchical_trial(dataset, options: BenchOptions, trial: int) -> Tuple[int, bool, float]:
    with open_index(dataset) as index:
        keys = index.keys()
        order = get_rng(options.seed, "bench", trial).permutation(len(keys))
        deadline = _Deadline(options.timeout_s)
        groups = (lookup_group(dataset, keys[i], index) for i in order)
        seen, timed_out = _drain(groups, deadline)
    return seen, timed_out, 0.0


_TRIALS = {
    "streaming": _streaming_trial,
    "in_memory": _in_memory_trial,
    "hierarchical": _hierarchical_trial,
}


def run_trial(dataset, backend: str, trial: int, options: BenchOptions) -> TrialResult:
    """Run one timed pass; setup time is measured but excluded from ``elapsed_seconds``."""
    gc.collect()
    with MemorySampler(options.sample_interval_s) as sampler:
        start = time.perf_counter()
        seen, timed_out, setup_seconds = _TRIALS[backend](dataset, options, trial)
        total = time.perf_counter() - start
    result = TrialResult(
        trial=trial,
        examples_seen=seen,
        elapsed_seconds=total - setup_seconds,
        setup_seconds=setup_seconds,
        peak_memory_bytes=sampler.peak_bytes,
        timed_out=timed_out,
    )
    if timed_out:
        logger.warning(
            "%s trial %d timed out after %.1fs", backend, trial, options.timeout_s
        )
    else:
        logger.info(
            "%s trial %d: %d examples in %.3fs, peak %.1f MB",
            backend,
            trial,
            seen,
            result.elapsed_seconds,
            result.peak_memory_bytes / (1 << 20),
        )
    return result


def iterate_bench(
    dataset, backend: str, trials: int, options: Optional[BenchOptions] = None
) -> BenchReport:
    """
    Time full passes over a dataset through one access backend.

    Args:
        dataset: PartitionedDataset to iterate
        backend: One of "in_memory", "hierarchical", "streaming"
        trials: Number of serial trials
        options: Timeout, memory sampling and ordering knobs

    Returns:
        BenchReport with per-trial values plus mean and standard deviation
    """
    if backend not in BACKENDS:
        raise StreamError(f"unknown backend {backend!r}; expected one of {', '.join(BACKENDS)}")
    if trials < 1:
        raise StreamError(f"trials must be >= 1, got {trials}")
    options = options or BenchOptions()
    if backend == "hierarchical" and not index_path(dataset).exists():
        build_index(dataset)

    results: List[TrialResult] = [
        run_trial(dataset, backend, trial, options) for trial in range(trials)
    ]
    return BenchReport.from_trials(backend, results)


def write_bench_json(report: BenchReport, path: Union[str, Path]) -> Path:
    path = Path(path)
    with io.open(path, "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def write_bench_csv(report: BenchReport, path: Union[str, Path]) -> Path:
    """One row per trial."""
    path = Path(path)
    with io.open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=TRIAL_FIELDS)
        writer.writeheader()
        for trial in report.trials:
            row: Dict[str, object] = {"backend": report.backend}
            row.update(
                {name: getattr(trial, name) for name in TRIAL_FIELDS if name != "backend"}
            )
            writer.writerow(row)
    return path
