"""
Shard file handles.

A handle is owned by one execution context at a time; handles may be handed
to another thread or process but are never shared.
"""

import io
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterator, Optional, Tuple, Union

from .codec import (
    FRAME_OVERHEAD,
    HEADER_SIZE,
    MAX_RECORD_BYTES,
    ChecksumMismatchError,
    MalformedRecordError,
    RecordTooLargeError,
    TruncatedRecordError,
    decode_keyed_example,
    encode_keyed_example,
    frame_record,
    iter_frames,
    masked_crc,
    read_frame,
)
from .models import KeyedExample

PathLike = Union[str, os.PathLike]

_BUFFER_SIZE = 1 << 16


def shard_filename(index: int, total: int) -> str:
    """File name of shard ``index`` out of ``total``."""
    return f"data-{index:05d}-of-{total:05d}.tfrecord"


@dataclass(frozen=True)
class GroupSpan:
    """Location of one contiguous group run inside a shard file."""
    key: bytes
    offset: int
    count: int


class ShardWriter:
    """Appends framed keyed examples to a shard file."""

    def __init__(self, path: PathLike, max_record_bytes: int = MAX_RECORD_BYTES):
        self.path = Path(path)
        self.max_record_bytes = max_record_bytes
        self._file: Optional[BinaryIO] = io.open(self.path, "wb", buffering=_BUFFER_SIZE)
        self.offset = 0
        self.num_records = 0

    def write_frame(self, data: bytes) -> int:
        """Write raw frame data; returns the byte offset of the frame."""
        if self._file is None:
            raise ValueError(f"shard writer for {self.path} is closed")
        frame = frame_record(data, self.max_record_bytes)
        start = self.offset
        self._file.write(frame)
        self.offset += len(frame)
        self.num_records += 1
        return start

    def write(self, key: bytes, payload: bytes) -> int:
        """Write one keyed example; returns the byte offset of its frame."""
        return self.write_frame(encode_keyed_example(key, payload))

    def close(self) -> None:
        if self._file is not None:
            self._file.close()
            self._file = None

    def __enter__(self) -> "ShardWriter":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.close()


class ShardReader:
    """Forward reader over one shard file."""

    def __init__(self, path: PathLike, max_record_bytes: int = MAX_RECORD_BYTES):
        self.path = Path(path)
        self.max_record_bytes = max_record_bytes

    def _open(self) -> BinaryIO:
        return io.open(self.path, "rb", buffering=_BUFFER_SIZE)

    def records(self, start_offset: int = 0) -> Iterator[Tuple[int, KeyedExample]]:
        """Yield ``(offset, KeyedExample)`` pairs from ``start_offset`` onwards."""
        with self._open() as f:
            if start_offset:
                f.seek(start_offset)
            for offset, data in iter_frames(f, start_offset, self.max_record_bytes):
                yield offset, decode_keyed_example(data)

    def __iter__(self) -> Iterator[KeyedExample]:
        for _, example in self.records():
            yield example

    def read_group(self, offset: int, count: int) -> Iterator[bytes]:
        """Yield the payloads of ``count`` records starting at ``offset``."""
        if count <= 0:
            return
        with self._open() as f:
            f.seek(offset)
            position = offset
            for _ in range(count):
                frame = read_frame(f, position, self.max_record_bytes)
                if frame is None:
                    raise TruncatedRecordError(position)
                yield decode_keyed_example(frame.data).payload
                position += frame.frame_size

    def scan_groups(self) -> Iterator[GroupSpan]:
        """
        Yield group runs by reading frame headers and keys only.

        Payload bytes are skipped with a seek, so discovering a group costs
        O(1) memory regardless of its size. The length checksum of every
        frame is verified here; data checksums are verified when the group's
        examples are actually read.
        """
        with self._open() as f:
            size = os.fstat(f.fileno()).st_size
            offset = 0
            current: Optional[bytes] = None
            start = 0
            count = 0
            while True:
                header = f.read(HEADER_SIZE)
                if not header:
                    break
                if len(header) < HEADER_SIZE:
                    raise TruncatedRecordError(offset)
                (length,) = struct.unpack_from("<Q", header, 0)
                (masked_length_crc,) = struct.unpack_from("<I", header, 8)
                if masked_crc(header[:8]) != masked_length_crc:
                    raise ChecksumMismatchError(offset, "length")
                if length > self.max_record_bytes:
                    raise RecordTooLargeError(
                        f"frame at byte offset {offset} declares {length} bytes, "
                        f"over the {self.max_record_bytes}-byte limit"
                    )
                end = offset + FRAME_OVERHEAD + length
                if end > size:
                    raise TruncatedRecordError(offset)
                if length < 5:
                    raise MalformedRecordError(
                        f"frame at byte offset {offset} is too short for a keyed example"
                    )
                (key_len,) = struct.unpack("<I", f.read(4))
                if key_len == 0 or key_len > length - 4:
                    raise MalformedRecordError(
                        f"frame at byte offset {offset} declares a {key_len}-byte key "
                        f"in a {length}-byte record"
                    )
                key = f.read(key_len)
                f.seek(end)

                if key != current:
                    if current is not None:
                        yield GroupSpan(current, start, count)
                    current, start, count = key, offset, 0
                count += 1
                offset = end
            if current is not None:
                yield GroupSpan(current, start, count)
