"""
In-memory and hierarchical group access.

The in-memory backend holds every group as a key-value mapping. The
hierarchical backend keeps a sidecar index next to the shards and seeks
straight to a group's run on lookup.

Index layout (little-endian)::

    8 bytes  magic "GRPIDX01"
    uint64   number of entries N
    uint64   entry_offset[N]        absolute file offsets, entries sorted by key
    entries: uint32 key_len, key, uint32 shard, uint64 offset, uint64 count
"""

import io
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Dict, Iterator, List, Optional

from ..config import config as base_config
from ..records import ShardReader
from .models import (
    INDEX_NAME,
    GroupDataset,
    IndexMissingError,
    MemoryBudgetExceededError,
    StreamError,
    UnknownGroupError,
)
from .stream import scan_shard

logger = logging.getLogger(__name__)

_MAGIC = b"GRPIDX01"
_COUNT = struct.Struct("<Q")
_KEY_LEN = struct.Struct("<I")
_LOCATION = struct.Struct("<IQQ")
_HEADER_SIZE = len(_MAGIC) + _COUNT.size
# per-entry bookkeeping charged against the in-memory budget
_ENTRY_OVERHEAD = 64


def load_in_memory(dataset, budget_bytes: Optional[int] = None) -> Dict[bytes, List[bytes]]:
    """
    Load every group into a ``key -> [payload, ...]`` mapping.

    Raises:
        MemoryBudgetExceededError: If the payloads exceed ``budget_bytes``
    """
    if budget_bytes is None:
        budget_bytes = int(base_config["in_memory_budget_mb"]) << 20
    on_disk = sum(path.stat().st_size for path in dataset.shard_paths)
    if on_disk > budget_bytes:
        raise MemoryBudgetExceededError(
            f"dataset holds {on_disk} bytes on disk, over the {budget_bytes}-byte in-memory budget"
        )

    groups: Dict[bytes, List[bytes]] = {}
    used = 0
    for path in dataset.shard_paths:
        for example in ShardReader(path):
            bucket = groups.get(example.key)
            if bucket is None:
                bucket = groups[example.key] = []
                used += len(example.key) + _ENTRY_OVERHEAD
            bucket.append(example.payload)
            used += len(example.payload) + _ENTRY_OVERHEAD
            if used > budget_bytes:
                raise MemoryBudgetExceededError(
                    f"in-memory load passed the {budget_bytes}-byte budget"
                )
    logger.debug("loaded %d groups (%d bytes) into memory", len(groups), used)
    return groups


@dataclass(frozen=True)
class IndexEntry:
    key: bytes
    shard: int
    offset: int
    count: int


def index_path(dataset) -> Path:
    return Path(dataset.root) / INDEX_NAME


def build_index(dataset) -> Path:
    """Scan every shard once and write the sorted group index next to the manifest."""
    entries: List[IndexEntry] = []
    for shard, path in enumerate(dataset.shard_paths):
        for group in scan_shard(path):
            entries.append(IndexEntry(group.key, shard, group.offset, group.count))
    entries.sort(key=lambda entry: entry.key)

    encoded = [
        _KEY_LEN.pack(len(e.key)) + e.key + _LOCATION.pack(e.shard, e.offset, e.count)
        for e in entries
    ]
    position = _HEADER_SIZE + _COUNT.size * len(entries)
    offsets = []
    for blob in encoded:
        offsets.append(position)
        position += len(blob)

    target = index_path(dataset)
    with io.open(target, "wb") as f:
        f.write(_MAGIC)
        f.write(_COUNT.pack(len(entries)))
        for offset in offsets:
            f.write(_COUNT.pack(offset))
        for blob in encoded:
            f.write(blob)
    logger.info("wrote group index with %d entries to %s", len(entries), target)
    return target


class GroupIndex:
    """Seek-based reader of a group index file."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self._file: Optional[BinaryIO] = io.open(self.path, "rb")
        magic = self._file.read(len(_MAGIC))
        if magic != _MAGIC:
            self.close()
            raise StreamError(f"{self.path} is not a group index")
        (self._size,) = _COUNT.unpack(self._file.read(_COUNT.size))

    def __len__(self) -> int:
        return self._size

    def _entry(self, position: int) -> IndexEntry:
        f = self._file
        f.seek(_HEADER_SIZE + _COUNT.size * position)
        (offset,) = _COUNT.unpack(f.read(_COUNT.size))
        f.seek(offset)
        (key_len,) = _KEY_LEN.unpack(f.read(_KEY_LEN.size))
        key = f.read(key_len)
        shard, group_offset, count = _LOCATION.unpack(f.read(_LOCATION.size))
        return IndexEntry(key, shard, group_offset, count)

    def find(self, key: bytes) -> IndexEntry:
        """Binary search over the sorted entries."""
        if self._file is None:
            raise StreamError(f"group index {self.path} is closed")
        lo, hi = 0, self._size
        while lo < hi:
            mid = (lo + hi) // 2
            entry = self._entry(mid)
            if entry.key == key:
                return entry
            if entry.key < key:
                lo = mid + 1
            else:
                hi = mid
        raise UnknownGroupError(key)

    def entries(self) -> Iterator[IndexEntry]:
        for position in range(self._size):
            yield self._entry(position)

    def keys(self) -> List[bytes]:
        return [entry.key for entry in self.entries()]

    def close(self) -> None:
        if self._file is not None:
            self._file.close()
            self._file = None

    def __enter__(self) -> "GroupIndex":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.close()


def open_index(dataset) -> GroupIndex:
    path = index_path(dataset)
    if not path.exists():
        raise IndexMissingError(f"no {INDEX_NAME} under {dataset.root}; build the index first")
    return GroupIndex(path)


def lookup_group(dataset, key: bytes, index: Optional[GroupIndex] = None) -> GroupDataset:
    """
    Random-access lookup of one group through the hierarchical index.

    Args:
        dataset: PartitionedDataset with a built index
        key: Group key
        index: Already opened index to reuse across lookups

    Returns:
        GroupDataset reading exactly that group's examples in stored order
    """
    owned = index is None
    index = index or open_index(dataset)
    try:
        entry = index.find(key)
    finally:
        if owned:
            index.close()
    return GroupDataset(
        key=entry.key,
        shard_path=dataset.shard_paths[entry.shard],
        offset=entry.offset,
        count=entry.count,
    )
