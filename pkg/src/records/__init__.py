"""
Record format module.

Bit-exact TFRecord framing plus the keyed-example layout used by every shard
file, and the reader/writer handles built on top of them.
"""

from .codec import (
    MAX_RECORD_BYTES,
    ChecksumMismatchError,
    EmptyKeyError,
    MalformedRecordError,
    RecordFormatError,
    RecordTooLargeError,
    TruncatedRecordError,
    decode_keyed_example,
    encode_keyed_example,
    frame_record,
    mask_crc32c,
    unframe_stream,
    unmask_crc32c,
)
from .models import FramedRecord, KeyedExample
from .shards import GroupSpan, ShardReader, ShardWriter, shard_filename

__all__ = [
    "MAX_RECORD_BYTES",
    "ChecksumMismatchError",
    "EmptyKeyError",
    "FramedRecord",
    "GroupSpan",
    "KeyedExample",
    "MalformedRecordError",
    "RecordFormatError",
    "RecordTooLargeError",
    "ShardReader",
    "ShardWriter",
    "TruncatedRecordError",
    "decode_keyed_example",
    "encode_keyed_example",
    "frame_record",
    "mask_crc32c",
    "shard_filename",
    "unframe_stream",
    "unmask_crc32c",
]
