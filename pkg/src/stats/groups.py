"""
Per-group statistics over a partitioned dataset.

Everything here is a single streaming pass over the shards in order (one
shard at a time, no shuffling), optionally fanned out over shards with a
process pool. Results are merged in shard order, so they are identical for
any worker count.
"""

import json
import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from itertools import combinations
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..config import config as base_config
from ..partition.keys import serialize_scalar
from ..streaming import scan_shard
from .models import DatasetSummary, DecodeError, GroupSizeTable, GroupStatsRow, QuantileSummary

logger = logging.getLogger(__name__)


def count_words(text: str) -> int:
    """Number of maximal runs of non-whitespace characters."""
    return len(text.split())


def payload_text(payload: bytes, payload_format: str, text_field: str) -> str:
    """Text of one payload; raises ValueError or KeyError when it has none."""
    if payload_format == "text":
        return payload.decode("utf-8")
    record = json.loads(payload.decode("utf-8"))
    value = record[text_field]
    if not isinstance(value, str):
        raise ValueError(f"field {text_field!r} is not a string")
    return value


def _shard_stats(
    path: str, payload_format: str, text_field: str
) -> Tuple[List[GroupStatsRow], List[int]]:
    rows: List[GroupStatsRow] = []
    example_words: List[int] = []
    for group in scan_shard(Path(path)):
        group_words = 0
        for index, payload in enumerate(group):
            try:
                words = count_words(payload_text(payload, payload_format, text_field))
            except (UnicodeDecodeError, ValueError, KeyError, TypeError) as exc:
                raise DecodeError(group.key, index, str(exc)) from exc
            example_words.append(words)
            group_words += words
        rows.append(GroupStatsRow(group.key, group.count, group_words))
    return rows, example_words


def _shard_stats_task(args) -> Tuple[List[GroupStatsRow], List[int]]:
    return _shard_stats(*args)


def compute_group_stats(
    dataset, text_field: Optional[str] = None, workers: int = 1
) -> Tuple[GroupSizeTable, List[int]]:
    """
    Word and example counts for every group.

    Args:
        dataset: PartitionedDataset to read
        text_field: JSON field holding the text (ignored for text payloads)
        workers: Processes to spread the shards over

    Returns:
        (table sorted by key, per-example word counts in stream order)
    """
    text_field = text_field or base_config["text_field"]
    payload_format = dataset.manifest.payload_format
    tasks = [(p.as_posix(), payload_format, text_field) for p in dataset.shard_paths]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_shard_stats_task, tasks))
    else:
        results = [_shard_stats(*task) for task in tasks]

    rows: List[GroupStatsRow] = []
    example_words: List[int] = []
    for shard_rows, shard_words in results:
        rows.extend(shard_rows)
        example_words.extend(shard_words)
    rows.sort(key=lambda row: row.key)
    logger.info("computed statistics for %d groups, %d examples", len(rows), len(example_words))
    return GroupSizeTable(rows=rows), example_words


def dataset_summary(table: GroupSizeTable, example_words: Sequence[int]) -> DatasetSummary:
    """Totals, quantile summaries and the log-normal fit of per-group word counts."""
    if not table.rows:
        zeros = QuantileSummary(0.0, 0.0, 0.0, 0.0, 0.0)
        return DatasetSummary(0, 0, 0, zeros, zeros, zeros, 0.0, 0.0, 0.0, 0.0)

    group_words = [row.num_words for row in table.rows]
    logs = np.log(np.asarray([w for w in group_words if w > 0], dtype=np.float64))
    words = list(example_words) or [0]
    return DatasetSummary(
        num_groups=len(table),
        num_examples=table.num_examples,
        num_words=table.num_words,
        examples_per_group=QuantileSummary.from_values([row.num_examples for row in table.rows]),
        words_per_group=QuantileSummary.from_values(group_words),
        words_per_example=QuantileSummary.from_values(words),
        mean_words_per_group=float(np.mean(group_words)),
        mean_words_per_example=float(np.mean(words)),
        log_words_mu=float(np.mean(logs)) if logs.size else 0.0,
        log_words_sigma=float(np.std(logs, ddof=1)) if logs.size > 1 else 0.0,
    )


def label_histograms(dataset, label_field: str) -> Tuple[List[bytes], List[bytes], np.ndarray]:
    """
    Count label values per group.

    Returns:
        (group keys sorted, label values sorted, counts of shape [groups, labels])
    """
    counts: Dict[bytes, Counter] = {}
    for path in dataset.shard_paths:
        for group in scan_shard(path):
            histogram = counts.setdefault(group.key, Counter())
            for index, payload in enumerate(group):
                try:
                    record = json.loads(payload.decode("utf-8"))
                    label = serialize_scalar(record[label_field])
                except (UnicodeDecodeError, ValueError, KeyError, TypeError) as exc:
                    raise DecodeError(group.key, index, str(exc)) from exc
                histogram[label] += 1

    keys = sorted(counts)
    labels = sorted({label for histogram in counts.values() for label in histogram})
    matrix = np.zeros((len(keys), len(labels)), dtype=np.int64)
    column = {label: j for j, label in enumerate(labels)}
    for i, key in enumerate(keys):
        for label, count in counts[key].items():
            matrix[i, column[label]] = count
    return keys, labels, matrix


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(p - q).sum())


def mean_pairwise_tv(histograms: np.ndarray) -> float:
    """Mean total-variation distance over all pairs of normalized rows; empty rows are skipped."""
    rows = np.asarray(histograms, dtype=np.float64)
    totals = rows.sum(axis=1)
    distributions = rows[totals > 0] / totals[totals > 0, None]
    if len(distributions) < 2:
        return 0.0
    distances = [
        total_variation(distributions[i], distributions[j])
        for i, j in combinations(range(len(distributions)), 2)
    ]
    return float(np.mean(distances))
