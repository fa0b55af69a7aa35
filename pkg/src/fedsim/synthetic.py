"""
Synthetic heterogeneous language-modeling task.

Every client writes text from its own bigram chain. The chains share a base
transition matrix; client rows are drawn from a Dirichlet centred on the base
row with concentration ``alpha`` per entry, so small ``alpha`` makes clients
very different and large ``alpha`` makes them nearly identical.
"""

import logging
from functools import lru_cache
from itertools import combinations, count
from pathlib import Path
from typing import Iterable, Iterator, List, Union

import numpy as np

from ..partition import (
    CorpusSource,
    PartitionConfig,
    PartitionedDataset,
    PartitionStrategy,
    partition_corpus,
    sample_dirichlet,
)
from ..seeding import get_rng
from .models import FedSimError
from .text import token_id

logger = logging.getLogger(__name__)

CLIENT_FIELD = "client"
SPLITS = ("train", "validation")


@lru_cache(maxsize=16)
def synthetic_vocabulary(vocab_size: int) -> List[str]:
    """Words ``w`` with ``tokenize_hashed(w) == [j]`` for ``j = 1 .. vocab_size - 1``, in id order."""
    words: List[str] = [""] * (vocab_size - 1)
    missing = vocab_size - 1
    for n in count():
        word = f"w{n}"
        slot = token_id(word, vocab_size) - 1
        if not words[slot]:
            words[slot] = word
            missing -= 1
            if missing == 0:
                return words
    return words


def base_transition_matrix(vocab_size: int, seed: int) -> np.ndarray:
    """Shared ``(V-1) x (V-1)`` chain over the real token ids, rows drawn from Dirichlet(1)."""
    size = vocab_size - 1
    rng = get_rng(seed, "synthetic-base")
    return np.stack([sample_dirichlet(rng, np.ones(size)) for _ in range(size)])


def client_transition_matrix(
    base: np.ndarray, alpha: float, seed: int, split: str, client: int
) -> np.ndarray:
    rng = get_rng(seed, "synthetic-client", split, client)
    size = base.shape[0]
    return np.stack([sample_dirichlet(rng, alpha * size * row) for row in base])


def transition_tv(a: np.ndarray, b: np.ndarray) -> float:
    """Mean over rows of the total-variation distance between two chains."""
    return float(np.mean(0.5 * np.abs(a - b).sum(axis=1)))


def mean_pairwise_transition_tv(matrices: List[np.ndarray]) -> float:
    pairs = list(combinations(range(len(matrices)), 2))
    if not pairs:
        return 0.0
    return float(np.mean([transition_tv(matrices[i], matrices[j]) for i, j in pairs]))


def _sample_chain(matrix: np.ndarray, length: int, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(matrix, axis=1)
    size = matrix.shape[0]
    states = np.empty(length, dtype=np.int64)
    current = int(rng.integers(size))
    for i, u in enumerate(rng.random(length)):
        states[i] = current
        row = cdf[current]
        current = min(int(np.searchsorted(row, u * row[-1], side="right")), size - 1)
    return states


def _client_examples(
    num_clients: int,
    vocab_size: int,
    alpha: float,
    seed: int,
    split: str,
    examples_per_client: int,
    words_per_example: int,
) -> Iterator[dict]:
    vocabulary = synthetic_vocabulary(vocab_size)
    base = base_transition_matrix(vocab_size, seed)
    for client in range(num_clients):
        matrix = client_transition_matrix(base, alpha, seed, split, client)
        rng = get_rng(seed, "synthetic-text", split, client)
        states = _sample_chain(matrix, examples_per_client * words_per_example, rng)
        key = f"{split}-{client:05d}"
        for start in range(0, len(states), words_per_example):
            words = states[start : start + words_per_example]
            yield {CLIENT_FIELD: key, "text": " ".join(vocabulary[s] for s in words)}


def make_synthetic_task(
    num_clients: int,
    vocab_size: int,
    alpha: float,
    seed: int,
    output_dir: Union[str, Path],
    split: str = "train",
    examples_per_client: int = 8,
    words_per_example: int = 64,
    num_shards: int = 1,
    workers: int = 1,
    keep_files: Iterable[str] = (),
) -> PartitionedDataset:
    """
    Generate clients and partition them by client key into ``output_dir``.

    Splits share the base chain but draw distinct client chains, so a
    validation split holds unseen clients of the same task.
    """
    if vocab_size < 2:
        raise FedSimError(f"vocab_size must be >= 2, got {vocab_size}")
    if num_clients < 2:
        raise FedSimError(f"num_clients must be >= 2, got {num_clients}")
    if not alpha > 0:
        raise FedSimError(f"alpha must be > 0, got {alpha}")
    if split not in SPLITS:
        raise FedSimError(f"unknown split {split!r}; expected one of {', '.join(SPLITS)}")

    source = CorpusSource(
        examples=_client_examples(
            num_clients, vocab_size, alpha, seed, split, examples_per_client, words_per_example
        ),
        payload_format="json",
    )
    config = PartitionConfig(
        strategy=PartitionStrategy.by_feature(CLIENT_FIELD),
        seed=seed,
        num_shards=num_shards,
        workers=workers,
    )
    dataset = partition_corpus(source, config, output_dir, keep_files=keep_files)
    logger.info(
        "wrote synthetic %s split: %d clients, V=%d, alpha=%g", split, num_clients, vocab_size, alpha
    )
    return dataset
