"""
TFRecord framing and the keyed-example payload layout.

Frame layout (all little-endian)::

    uint64 length
    uint32 masked_crc32c(length bytes)
    byte   data[length]
    uint32 masked_crc32c(data)

Keyed-example layout::

    uint32 key_len
    byte   key[key_len]
    byte   payload[...]
"""

import struct
from typing import BinaryIO, Iterator, Optional, Tuple

import crc32c

from ..errors import GrouperError
from .models import FramedRecord, KeyedExample

MASK_DELTA = 0xA282EAD8
MASK32 = 0xFFFFFFFF
HEADER_SIZE = 12
FOOTER_SIZE = 4
FRAME_OVERHEAD = HEADER_SIZE + FOOTER_SIZE
MAX_RECORD_BYTES = 1 << 30
MAX_KEY_BYTES = (1 << 32) - 1

_LENGTH = struct.Struct("<Q")
_CRC = struct.Struct("<I")
_KEY_LEN = struct.Struct("<I")


class RecordFormatError(GrouperError):
    """Base exception for record framing and decoding errors."""
    pass


class ChecksumMismatchError(RecordFormatError):
    """Raised when a stored checksum does not match the frame contents."""

    def __init__(self, offset: int, what: str):
        super().__init__(f"{what} checksum mismatch in frame at byte offset {offset}")
        self.offset = offset
        self.what = what

    def __reduce__(self):
        return (self.__class__, (self.offset, self.what))


class TruncatedRecordError(RecordFormatError):
    """Raised when the stream ends in the middle of a frame."""

    def __init__(self, offset: int):
        super().__init__(f"truncated frame at byte offset {offset}")
        self.offset = offset

    def __reduce__(self):
        return (self.__class__, (self.offset,))


class RecordTooLargeError(RecordFormatError, ValueError):
    """Raised when a record exceeds the maximum frame payload size."""
    pass


class EmptyKeyError(RecordFormatError, ValueError):
    """Raised when a keyed example is built with an empty key."""
    pass


class MalformedRecordError(RecordFormatError):
    """Raised when a keyed-example payload cannot be decoded."""
    pass


def crc32c_of(data: bytes) -> int:
    """Castagnoli CRC (reflected, init and final XOR 0xFFFFFFFF)."""
    return crc32c.crc32c(data) & MASK32


def mask_crc32c(crc: int) -> int:
    """Rotate right by 15 bits and add the TFRecord mask constant, modulo 2^32."""
    crc &= MASK32
    rotated = ((crc >> 15) | (crc << 17)) & MASK32
    return (rotated + MASK_DELTA) & MASK32


def unmask_crc32c(masked: int) -> int:
    """Inverse of :func:`mask_crc32c`."""
    rotated = (masked - MASK_DELTA) & MASK32
    return ((rotated >> 17) | (rotated << 15)) & MASK32


def masked_crc(data: bytes) -> int:
    return mask_crc32c(crc32c_of(data))


def frame_record(data: bytes, max_record_bytes: int = MAX_RECORD_BYTES) -> bytes:
    """Wrap ``data`` in a TFRecord frame (``len(data) + 16`` bytes)."""
    if len(data) > max_record_bytes:
        raise RecordTooLargeError(
            f"record of {len(data)} bytes exceeds the {max_record_bytes}-byte limit"
        )
    length_bytes = _LENGTH.pack(len(data))
    return b"".join(
        [
            length_bytes,
            _CRC.pack(masked_crc(length_bytes)),
            data,
            _CRC.pack(masked_crc(data)),
        ]
    )


def read_frame(
    stream: BinaryIO,
    offset: int,
    max_record_bytes: int = MAX_RECORD_BYTES,
    verify: bool = True,
) -> Optional[FramedRecord]:
    """
    Read one frame starting at the current stream position.

    Args:
        stream: Binary stream positioned at a frame boundary
        offset: Byte offset of that position, used in error messages
        max_record_bytes: Upper bound on the frame payload
        verify: Check both checksums

    Returns:
        The frame, or None at a clean end of stream
    """
    header = stream.read(HEADER_SIZE)
    if not header:
        return None
    if len(header) < HEADER_SIZE:
        raise TruncatedRecordError(offset)

    (length,) = _LENGTH.unpack_from(header, 0)
    (masked_length_crc,) = _CRC.unpack_from(header, 8)
    if verify and masked_crc(header[:8]) != masked_length_crc:
        raise ChecksumMismatchError(offset, "length")
    if length > max_record_bytes:
        raise RecordTooLargeError(
            f"frame at byte offset {offset} declares {length} bytes, "
            f"over the {max_record_bytes}-byte limit"
        )

    data = stream.read(length)
    footer = stream.read(FOOTER_SIZE)
    if len(data) < length or len(footer) < FOOTER_SIZE:
        raise TruncatedRecordError(offset)

    (masked_data_crc,) = _CRC.unpack(footer)
    if verify and masked_crc(data) != masked_data_crc:
        raise ChecksumMismatchError(offset, "data")

    return FramedRecord(
        length=length,
        masked_length_crc=masked_length_crc,
        data=data,
        masked_data_crc=masked_data_crc,
    )


def iter_frames(
    stream: BinaryIO,
    start_offset: int = 0,
    max_record_bytes: int = MAX_RECORD_BYTES,
) -> Iterator[Tuple[int, bytes]]:
    """Yield ``(offset, data)`` for each frame; memory is bounded by one record."""
    offset = start_offset
    while True:
        frame = read_frame(stream, offset, max_record_bytes)
        if frame is None:
            return
        yield offset, frame.data
        offset += frame.frame_size


def unframe_stream(
    stream: BinaryIO, max_record_bytes: int = MAX_RECORD_BYTES
) -> Iterator[bytes]:
    """Yield each frame's data in order, reading the stream incrementally."""
    for _, data in iter_frames(stream, 0, max_record_bytes):
        yield data


def encode_keyed_example(key: bytes, payload: bytes) -> bytes:
    """Encode ``[key_len][key][payload]``."""
    if not key:
        raise EmptyKeyError("group key must be non-empty")
    if len(key) > MAX_KEY_BYTES:
        raise RecordTooLargeError(f"group key of {len(key)} bytes is too long")
    return _KEY_LEN.pack(len(key)) + key + payload


def decode_keyed_example(data: bytes) -> KeyedExample:
    """Inverse of :func:`encode_keyed_example`."""
    if len(data) < 5:
        raise MalformedRecordError(
            f"keyed example needs at least 5 bytes, got {len(data)}"
        )
    (key_len,) = _KEY_LEN.unpack_from(data, 0)
    if key_len == 0:
        raise MalformedRecordError("keyed example has an empty key")
    if key_len > len(data) - 4:
        raise MalformedRecordError(
            f"key length {key_len} exceeds the {len(data) - 4} remaining bytes"
        )
    return KeyedExample(key=data[4 : 4 + key_len], payload=data[4 + key_len :])
