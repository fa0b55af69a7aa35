"""
Partitioning pipeline.

Fan-out/fan-in over a flat corpus:

1. Examples get their index from input position, then are cut into chunks.
2. Each chunk is keyed by a worker, bucketed by shard, sorted by
   ``(key, example_index)`` and spilled to a single-writer run file.
3. One finalizer per shard k-way merges that shard's runs into the shard file,
   so every group occupies one contiguous run.

The sort key is a total order on examples, so the shard bytes depend only on
the input order and the config, never on the number of workers.
"""

import heapq
import io
import logging
import struct
import tempfile
from collections import defaultdict, deque
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Tuple, Union

from ..config import config as base_config
from ..records import (
    MAX_RECORD_BYTES,
    ShardWriter,
    decode_keyed_example,
    encode_keyed_example,
    shard_filename,
    unframe_stream,
)
from .keys import make_key_fn, shard_for_key
from .models import (
    PartitionConfig,
    PartitionedDataset,
    PartitionError,
    ShardInfo,
    ShardManifest,
)
from .sources import CorpusSource, Example, open_corpus, serialize_payload

logger = logging.getLogger(__name__)

_SPOOL_INDEX = struct.Struct("<Q")
# Rough per-example bookkeeping cost on top of the payload bytes
_EXAMPLE_OVERHEAD = 256

Item = Tuple[int, Example, bytes]
RunEntry = Tuple[bytes, int, bytes]


class OutputNotEmptyError(PartitionError):
    """Raised when the output directory already holds files."""
    pass


class PartitionFunctionError(PartitionError):
    """Raised when the key function fails on an example."""

    def __init__(self, example_index: int, message: str):
        super().__init__(example_index, message)
        self.example_index = example_index
        self.message = message

    def __str__(self) -> str:
        return f"partition function failed on example {self.example_index}: {self.message}"


def _spill_chunk(
    chunk_id: int,
    items: List[Item],
    config: PartitionConfig,
    spool_dir: str,
    max_record_bytes: int,
) -> List[Tuple[int, str, int]]:
    """Key, bucket, sort and spill one chunk; returns ``(shard, run_path, count)``."""
    key_fn = make_key_fn(config)
    buckets: Dict[int, List[RunEntry]] = defaultdict(list)
    for index, example, payload in items:
        try:
            key = key_fn(index, example)
        except Exception as exc:
            raise PartitionFunctionError(index, str(exc)) from exc
        if not key:
            raise PartitionFunctionError(index, "key function returned an empty key")
        buckets[shard_for_key(key, config.num_shards)].append((key, index, payload))

    runs = []
    for shard in sorted(buckets):
        entries = buckets[shard]
        entries.sort(key=lambda entry: (entry[0], entry[1]))
        path = Path(spool_dir) / f"run-{shard:05d}-{chunk_id:08d}.spool"
        with ShardWriter(path, max_record_bytes + _SPOOL_INDEX.size) as writer:
            for key, index, payload in entries:
                writer.write_frame(
                    _SPOOL_INDEX.pack(index) + encode_keyed_example(key, payload)
                )
        runs.append((shard, path.as_posix(), len(entries)))
    return runs


def _spill_task(args) -> List[Tuple[int, str, int]]:
    return _spill_chunk(*args)


def _iter_run(path: str, max_record_bytes: int) -> Iterator[RunEntry]:
    with io.open(path, "rb", buffering=1 << 16) as f:
        for data in unframe_stream(f, max_record_bytes + _SPOOL_INDEX.size):
            (index,) = _SPOOL_INDEX.unpack_from(data, 0)
            example = decode_keyed_example(data[_SPOOL_INDEX.size :])
            yield example.key, index, example.payload


def _finalize_shard(
    shard: int,
    num_shards: int,
    run_paths: List[str],
    output_dir: str,
    max_record_bytes: int,
) -> ShardInfo:
    """Merge the sorted runs of one shard into its final shard file."""
    name = shard_filename(shard, num_shards)
    num_groups = 0
    num_examples = 0
    last_key: Optional[bytes] = None
    runs = [_iter_run(p, max_record_bytes) for p in run_paths]
    with ShardWriter(Path(output_dir) / name, max_record_bytes) as writer:
        # (key, index) is unique, so payloads are never compared
        for key, _, payload in heapq.merge(*runs):
            writer.write(key, payload)
            num_examples += 1
            if key != last_key:
                num_groups += 1
                last_key = key
    logger.debug("shard %s: %d groups, %d examples", name, num_groups, num_examples)
    return ShardInfo(
        shard_index=shard, num_groups=num_groups, num_examples=num_examples, file=name
    )


def _finalize_task(args) -> ShardInfo:
    return _finalize_shard(*args)


def _chunk_examples(
    source: CorpusSource, chunk_bytes: int
) -> Iterator[List[Item]]:
    chunk: List[Item] = []
    size = 0
    for index, example in enumerate(source):
        payload = serialize_payload(example, source.payload_format)
        chunk.append((index, example, payload))
        size += len(payload) + _EXAMPLE_OVERHEAD
        if size >= chunk_bytes:
            yield chunk
            chunk, size = [], 0
    if chunk:
        yield chunk


def _as_source(source: Union[CorpusSource, str, Path, Iterable[Example]]) -> CorpusSource:
    if isinstance(source, CorpusSource):
        return source
    if isinstance(source, (str, Path)):
        return open_corpus(source)
    return CorpusSource(examples=source, payload_format="json")


def _prepare_output(output_dir: Path, keep_files: Iterable[str] = ()) -> None:
    if output_dir.exists():
        if not output_dir.is_dir():
            raise OutputNotEmptyError(f"{output_dir} exists and is not a directory")
        if any(child.name not in keep_files for child in output_dir.iterdir()):
            raise OutputNotEmptyError(f"output directory {output_dir} is not empty")
    output_dir.mkdir(parents=True, exist_ok=True)


def partition_corpus(
    source: Union[CorpusSource, str, Path, Iterable[Example]],
    config: PartitionConfig,
    output_dir: Union[str, Path],
    memory_budget_bytes: Optional[int] = None,
    tmpdir: Optional[str] = None,
    max_record_bytes: int = MAX_RECORD_BYTES,
    keep_files: Iterable[str] = (),
) -> PartitionedDataset:
    """
    Partition a flat corpus into a sharded, group-contiguous dataset.

    Args:
        source: Corpus path, CorpusSource, or iterable of example dicts
        config: Strategy, seed, shard count and worker count
        output_dir: Empty (or missing) directory for shards and manifest
        memory_budget_bytes: In-memory sort budget before spilling runs
        tmpdir: Parent directory for spill files
        max_record_bytes: Upper bound on one shard record
        keep_files: Names that may already exist in ``output_dir``

    Returns:
        The written PartitionedDataset
    """
    source = _as_source(source)
    output_dir = Path(output_dir)
    _prepare_output(output_dir, frozenset(keep_files))

    if memory_budget_bytes is None:
        memory_budget_bytes = int(base_config["memory_budget_mb"]) * (1 << 20)
    tmpdir = tmpdir or base_config["tmpdir"]
    Path(tmpdir).mkdir(parents=True, exist_ok=True)
    chunk_bytes = max(1 << 16, memory_budget_bytes // (2 * config.workers))
    num_shards = config.num_shards

    runs_by_shard: Dict[int, List[str]] = defaultdict(list)
    with tempfile.TemporaryDirectory(prefix="grouper-spool-", dir=tmpdir) as spool_dir:
        chunks = _chunk_examples(source, chunk_bytes)
        if config.workers == 1:
            for chunk_id, items in enumerate(chunks):
                for shard, path, _ in _spill_chunk(
                    chunk_id, items, config, spool_dir, max_record_bytes
                ):
                    runs_by_shard[shard].append(path)
            infos = [
                _finalize_shard(s, num_shards, runs_by_shard[s], output_dir.as_posix(), max_record_bytes)
                for s in range(num_shards)
            ]
        else:
            with ProcessPoolExecutor(max_workers=config.workers) as pool:
                pending: deque = deque()
                for chunk_id, items in enumerate(chunks):
                    pending.append(
                        pool.submit(
                            _spill_task,
                            (chunk_id, items, config, spool_dir, max_record_bytes),
                        )
                    )
                    # bound the number of chunks held in memory
                    while len(pending) >= 2 * config.workers:
                        for shard, path, _ in pending.popleft().result():
                            runs_by_shard[shard].append(path)
                while pending:
                    for shard, path, _ in pending.popleft().result():
                        runs_by_shard[shard].append(path)
                infos = list(
                    pool.map(
                        _finalize_task,
                        [
                            (s, num_shards, runs_by_shard[s], output_dir.as_posix(), max_record_bytes)
                            for s in range(num_shards)
                        ],
                    )
                )

    manifest = ShardManifest(
        num_shards=num_shards,
        num_groups=sum(info.num_groups for info in infos),
        num_examples=sum(info.num_examples for info in infos),
        per_shard=infos,
        partition_config=config.to_dict(),
        payload_format=source.payload_format,
    )
    manifest.validate()
    dataset = PartitionedDataset(root=output_dir, manifest=manifest)
    dataset.write_manifest()
    logger.info(
        "partitioned %d examples into %d groups across %d shards at %s",
        manifest.num_examples,
        manifest.num_groups,
        num_shards,
        output_dir,
    )
    return dataset
