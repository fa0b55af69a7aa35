"""
Data models for framed records.

A shard file is a plain concatenation of TFRecord frames; every frame carries
one keyed example.
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class FramedRecord:
    """One TFRecord frame as laid out on disk."""
    length: int
    masked_length_crc: int
    data: bytes
    masked_data_crc: int

    @property
    def frame_size(self) -> int:
        return 16 + self.length


@dataclass(frozen=True)
class KeyedExample:
    """A group key plus an opaque example payload."""
    key: bytes
    payload: bytes
