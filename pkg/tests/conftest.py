"""Shared fixtures: small corpora and partitioned datasets."""

import json
from pathlib import Path
from typing import Dict, List

import pytest

from src.partition import PartitionConfig, PartitionStrategy, partition_corpus


def write_jsonl(path: Path, rows: List[Dict]) -> Path:
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")
    return path


def make_rows(num_groups: int, per_group: int, words: int = 3) -> List[Dict]:
    """Rows ``{"domain": "g{i}", "text": ..., "label": ...}``, interleaved across groups."""
    rows = []
    for j in range(per_group):
        for i in range(num_groups):
            text = " ".join(f"tok{i}_{j}_{w}" for w in range(words))
            rows.append({"domain": f"g{i:03d}", "text": text, "label": f"l{(i + j) % 3}"})
    return rows


@pytest.fixture
def corpus_rows() -> List[Dict]:
    return make_rows(num_groups=6, per_group=4)


@pytest.fixture
def corpus_path(tmp_path, corpus_rows) -> Path:
    return write_jsonl(tmp_path / "corpus.jsonl", corpus_rows)


@pytest.fixture
def dataset(tmp_path, corpus_path):
    """Six groups of four examples, keyed by ``domain``, over two shards."""
    config = PartitionConfig(
        strategy=PartitionStrategy.by_feature("domain"), seed=0, num_shards=2
    )
    return partition_corpus(corpus_path, config, tmp_path / "dataset")


@pytest.fixture
def jsonl_corpus(tmp_path):
    """Factory writing ``make_rows(...)`` (or explicit rows) to a fresh JSONL file."""
    counter = {"n": 0}

    def _write(rows=None, num_groups: int = 6, per_group: int = 4, words: int = 3) -> Path:
        counter["n"] += 1
        if rows is None:
            rows = make_rows(num_groups, per_group, words)
        return write_jsonl(tmp_path / f"corpus-{counter['n']}.jsonl", rows)

    return _write
