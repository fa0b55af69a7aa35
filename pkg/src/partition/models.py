"""
Data models for partitioning.

This module defines the partition strategies, the partition configuration,
the on-disk manifest and the handle for a partitioned dataset.
"""

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from ..errors import GrouperError

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
STRATEGIES = ("by_feature", "random", "dirichlet")
PAYLOAD_FORMATS = ("json", "text")


class PartitionError(GrouperError):
    """Base exception for partitioning errors."""
    pass


class ManifestError(PartitionError):
    """Raised when a manifest is missing, malformed or inconsistent."""
    pass


@dataclass(frozen=True)
class DirichletSpec:
    """Per-label Dirichlet split over ``num_groups`` groups."""
    num_groups: int
    alpha: float
    seed: int = 0

    def __post_init__(self):
        if self.num_groups < 1:
            raise PartitionError(f"num_groups must be >= 1, got {self.num_groups}")
        if not self.alpha > 0:
            raise PartitionError(f"alpha must be > 0, got {self.alpha}")


@dataclass(frozen=True)
class PartitionStrategy:
    """
    How each example is mapped to its group key.

    ``by_feature`` uses ``feature_name``; ``random`` uses ``num_groups``;
    ``dirichlet`` uses ``num_groups``, ``alpha`` and an optional
    ``label_field`` (unlabeled corpora share the empty label).
    """
    kind: str
    feature_name: Optional[str] = None
    num_groups: Optional[int] = None
    alpha: Optional[float] = None
    label_field: Optional[str] = None

    def __post_init__(self):
        if self.kind not in STRATEGIES:
            raise PartitionError(
                f"unknown strategy {self.kind!r}; expected one of {', '.join(STRATEGIES)}"
            )
        if self.kind == "by_feature" and not self.feature_name:
            raise PartitionError("by_feature partitioning needs a feature name")
        if self.kind in ("random", "dirichlet"):
            if self.num_groups is None or self.num_groups < 1:
                raise PartitionError(f"{self.kind} partitioning needs num_groups >= 1")
        if self.kind == "dirichlet" and (self.alpha is None or not self.alpha > 0):
            raise PartitionError("dirichlet partitioning needs alpha > 0")

    @classmethod
    def by_feature(cls, feature_name: str) -> "PartitionStrategy":
        return cls(kind="by_feature", feature_name=feature_name)

    @classmethod
    def random(cls, num_groups: int) -> "PartitionStrategy":
        return cls(kind="random", num_groups=num_groups)

    @classmethod
    def dirichlet(
        cls, num_groups: int, alpha: float, label_field: Optional[str] = None
    ) -> "PartitionStrategy":
        return cls(
            kind="dirichlet", num_groups=num_groups, alpha=alpha, label_field=label_field
        )


@dataclass(frozen=True)
class PartitionConfig:
    """Everything the assignment of an example may depend on, besides the example."""
    strategy: PartitionStrategy
    seed: int = 0
    num_shards: int = 1
    workers: int = 1

    def __post_init__(self):
        if self.num_shards < 1:
            raise PartitionError(f"num_shards must be >= 1, got {self.num_shards}")
        if self.workers < 1:
            raise PartitionError(f"workers must be >= 1, got {self.workers}")
        if not 0 <= self.seed < 2**64:
            raise PartitionError("seed must be an unsigned 64-bit integer")

    def dirichlet_spec(self) -> DirichletSpec:
        return DirichletSpec(
            num_groups=self.strategy.num_groups,
            alpha=self.strategy.alpha,
            seed=self.seed,
        )

    def to_dict(self) -> Dict[str, Any]:
        # workers never influences the output, so it is not part of the echo
        return {
            "strategy": {k: v for k, v in asdict(self.strategy).items() if v is not None},
            "seed": self.seed,
            "num_shards": self.num_shards,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], workers: int = 1) -> "PartitionConfig":
        return cls(
            strategy=PartitionStrategy(**data["strategy"]),
            seed=int(data.get("seed", 0)),
            num_shards=int(data.get("num_shards", 1)),
            workers=workers,
        )


@dataclass
class ShardInfo:
    shard_index: int
    num_groups: int
    num_examples: int
    file: str


@dataclass
class ShardManifest:
    """Totals and per-shard counts of a partitioned dataset."""
    num_shards: int
    num_groups: int
    num_examples: int
    per_shard: List[ShardInfo]
    partition_config: Dict[str, Any]
    payload_format: str = "json"
    format_version: int = FORMAT_VERSION

    def validate(self) -> None:
        if len(self.per_shard) != self.num_shards:
            raise ManifestError(
                f"manifest lists {len(self.per_shard)} shards, expected {self.num_shards}"
            )
        if sum(s.num_groups for s in self.per_shard) != self.num_groups:
            raise ManifestError("per-shard group counts do not sum to num_groups")
        if sum(s.num_examples for s in self.per_shard) != self.num_examples:
            raise ManifestError("per-shard example counts do not sum to num_examples")
        if self.payload_format not in PAYLOAD_FORMATS:
            raise ManifestError(f"unknown payload format {self.payload_format!r}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ShardManifest":
        try:
            return cls(
                num_shards=int(data["num_shards"]),
                num_groups=int(data["num_groups"]),
                num_examples=int(data["num_examples"]),
                per_shard=[ShardInfo(**s) for s in data["per_shard"]],
                partition_config=dict(data.get("partition_config", {})),
                payload_format=data.get("payload_format", "json"),
                format_version=int(data.get("format_version", FORMAT_VERSION)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"malformed manifest: {exc}") from exc


@dataclass
class PartitionedDataset:
    """Manifest plus shard files under one directory."""
    root: Path
    manifest: ShardManifest

    @classmethod
    def open(cls, path: Union[str, Path]) -> "PartitionedDataset":
        root = Path(path)
        manifest_path = root / MANIFEST_NAME
        if not manifest_path.exists():
            raise ManifestError(f"no {MANIFEST_NAME} under {root}")
        try:
            data = json.loads(manifest_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ManifestError(f"invalid JSON in {manifest_path}: {exc}") from exc
        manifest = ShardManifest.from_dict(data)
        manifest.validate()
        # shard files are only touched when read, so a missing shard fails lazily
        return cls(root=root, manifest=manifest)

    @property
    def shard_paths(self) -> List[Path]:
        return [self.root / info.file for info in self.manifest.per_shard]

    @property
    def num_groups(self) -> int:
        return self.manifest.num_groups

    @property
    def num_examples(self) -> int:
        return self.manifest.num_examples

    def write_manifest(self) -> Path:
        path = self.root / MANIFEST_NAME
        path.write_text(
            json.dumps(self.manifest.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        return path

