"""
Partition module.

Turns a flat corpus into a sharded dataset whose groups are contiguous runs
inside exactly one shard each.
"""

from ..hashing import fnv1a64
from .keys import (
    MissingFeatureError,
    dirichlet_group_probs,
    key_by_feature,
    key_dirichlet,
    key_random,
    make_key_fn,
    sample_dirichlet,
    shard_for_key,
)
from .models import (
    MANIFEST_NAME,
    STRATEGIES,
    DirichletSpec,
    ManifestError,
    PartitionConfig,
    PartitionedDataset,
    PartitionError,
    PartitionStrategy,
    ShardInfo,
    ShardManifest,
)
from .pipeline import OutputNotEmptyError, PartitionFunctionError, partition_corpus
from .sources import CorpusFormatError, CorpusSource, open_corpus, serialize_payload

__all__ = [
    "MANIFEST_NAME",
    "STRATEGIES",
    "CorpusFormatError",
    "CorpusSource",
    "DirichletSpec",
    "ManifestError",
    "MissingFeatureError",
    "OutputNotEmptyError",
    "PartitionConfig",
    "PartitionError",
    "PartitionFunctionError",
    "PartitionStrategy",
    "PartitionedDataset",
    "ShardInfo",
    "ShardManifest",
    "dirichlet_group_probs",
    "fnv1a64",
    "key_by_feature",
    "key_dirichlet",
    "key_random",
    "make_key_fn",
    "open_corpus",
    "partition_corpus",
    "sample_dirichlet",
    "serialize_payload",
    "shard_for_key",
]
