"""
Reproducibility utilities.

All randomness flows from one integer seed through named sub-streams
("partition", "shuffle", "init", "schedule", ...), so each component can be
reproduced in isolation.
"""

from typing import Sequence, Union

import numpy as np

from .hashing import fnv1a64

SeedPart = Union[int, str, bytes]


def _as_int(part: SeedPart) -> int:
    if isinstance(part, int):
        return part & 0xFFFFFFFFFFFFFFFF
    if isinstance(part, str):
        part = part.encode("utf-8")
    return fnv1a64(part)


def derive_seed(seed: int, *parts: SeedPart) -> int:
    """Derive a stable 64-bit sub-seed from a root seed and stream names."""
    value = seed & 0xFFFFFFFFFFFFFFFF
    for part in parts:
        value = fnv1a64(_as_int(part).to_bytes(8, "little"), seed=value)
    return value


def get_rng(seed: int, *parts: SeedPart) -> np.random.Generator:
    """
    Get a numpy generator for a named sub-stream of ``seed``.

    Args:
        seed: Root seed
        parts: Stream names or integers identifying the sub-stream

    Returns:
        numpy Generator instance
    """
    entropy: Sequence[int] = [seed & 0xFFFFFFFFFFFFFFFF] + [_as_int(p) for p in parts]
    return np.random.default_rng(np.random.SeedSequence(entropy))
