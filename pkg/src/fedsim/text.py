"""
Client data pipeline: payload text to hashed tokens to fixed-length batches.
"""

from dataclasses import dataclass
from typing import Iterable, List

import numpy as np

from ..hashing import fnv1a64
from ..stats import payload_text
from ..streaming import EmptyGroupError, take_repeat
from .lm import PAD_ID
from .models import FedSimError, RoundConfig


def token_id(word: str, vocab_size: int) -> int:
    return 1 + fnv1a64(word.encode("utf-8")) % (vocab_size - 1)


def tokenize_hashed(text: str, vocab_size: int) -> List[int]:
    """Map each whitespace-delimited word to ``1 + fnv1a64(word) % (vocab_size - 1)``."""
    if vocab_size < 2:
        raise FedSimError(f"vocab_size must be >= 2, got {vocab_size}")
    return [token_id(word, vocab_size) for word in text.split()]


def pack_sequences(tokens: Iterable[int], seq_len: int = 129) -> np.ndarray:
    """
    Cut a token stream into rows of ``seq_len``; the last row is right-padded with 0.

    Returns:
        int64 array of shape ``(num_sequences, seq_len)``
    """
    if seq_len < 2:
        raise FedSimError(f"seq_len must be >= 2, got {seq_len}")
    flat = np.fromiter(tokens, dtype=np.int64)
    if flat.size == 0:
        return np.zeros((0, seq_len), dtype=np.int64)
    rows = -(-flat.size // seq_len)
    packed = np.full(rows * seq_len, PAD_ID, dtype=np.int64)
    packed[: flat.size] = flat
    return packed.reshape(rows, seq_len)


@dataclass
class ClientPipeline:
    """Turns one group into ``batches_per_client`` batches of ``batch_size`` sequences."""
    vocab_size: int
    seq_len: int
    batch_size: int
    batches_per_client: int
    payload_format: str = "json"
    text_field: str = "text"

    @classmethod
    def from_config(cls, config: RoundConfig, payload_format: str) -> "ClientPipeline":
        return cls(
            vocab_size=config.vocab_size,
            seq_len=config.seq_len,
            batch_size=config.batch_size,
            batches_per_client=config.batches_per_client,
            payload_format=payload_format,
            text_field=config.text_field,
        )

    def tokens(self, group: Iterable[bytes]) -> Iterable[int]:
        for payload in group:
            yield from tokenize_hashed(
                payload_text(payload, self.payload_format, self.text_field), self.vocab_size
            )

    def sequences(self, group: Iterable[bytes]) -> np.ndarray:
        # all of a client's text is concatenated before packing
        return pack_sequences(self.tokens(group), self.seq_len)

    def batches(self, group: Iterable[bytes]) -> List[np.ndarray]:
        """Raises EmptyGroupError when the group yields no row with a prediction position."""
        sequences = self.sequences(group)
        # rows are right-padded, so a row predicts something iff its second slot is a token
        sequences = sequences[sequences[:, 1] != PAD_ID]
        if len(sequences) == 0:
            raise EmptyGroupError(f"group {getattr(group, 'key', b'')!r} has no tokens")
        wanted = self.batch_size * self.batches_per_client
        examples = np.stack(list(take_repeat(list(sequences), wanted)))
        return list(examples.reshape(self.batches_per_client, self.batch_size, self.seq_len))
