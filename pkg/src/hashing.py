"""Stable, platform-independent hashing used for keys, shards and tokens."""

FNV_OFFSET_BASIS = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes, seed: int = 0) -> int:
    """FNV-1a 64-bit hash of ``data``; ``seed`` is XOR-folded into the offset basis."""
    h = FNV_OFFSET_BASIS ^ (seed & MASK64)
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & MASK64
    return h
