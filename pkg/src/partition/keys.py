"""
Group-key functions.

Every key function has the signature ``(example_index, example) -> key`` and
looks at nothing else, which is what lets partitioning fan out across workers
without coordination.
"""

import math
from functools import lru_cache
from typing import Any, Callable, Mapping

import numpy as np

from ..hashing import fnv1a64
from ..seeding import get_rng
from .models import DirichletSpec, PartitionConfig, PartitionError

KeyFn = Callable[[int, Mapping[str, Any]], bytes]


class MissingFeatureError(PartitionError, KeyError):
    """Raised when an example lacks the feature used as its group key."""

    def __init__(self, feature_name: str):
        super().__init__(f"example has no feature {feature_name!r}")
        self.feature_name = feature_name

    def __reduce__(self):
        return (self.__class__, (self.feature_name,))

    def __str__(self) -> str:
        return self.args[0]


def serialize_scalar(value: Any) -> bytes:
    """Render a scalar feature value as key bytes (decimal for numbers)."""
    if isinstance(value, bytes):
        return value
    if isinstance(value, str):
        return value.encode("utf-8")
    if isinstance(value, bool):
        return b"true" if value else b"false"
    if isinstance(value, int):
        return str(value).encode("ascii")
    if isinstance(value, float):
        if value.is_integer():
            return str(int(value)).encode("ascii")
        return repr(value).encode("ascii")
    raise PartitionError(f"feature value of type {type(value).__name__} is not a scalar")


def key_by_feature(example: Mapping[str, Any], feature_name: str) -> bytes:
    """Use the value of ``feature_name`` as the group key."""
    if feature_name not in example or example[feature_name] is None:
        raise MissingFeatureError(feature_name)
    return serialize_scalar(example[feature_name])


def shard_for_key(key: bytes, num_shards: int) -> int:
    """Shard that holds every example of ``key``."""
    return fnv1a64(key) % num_shards


def key_random(example_index: int, num_groups: int, seed: int) -> bytes:
    """Uniform-at-random group from a stable hash of the example index."""
    if num_groups < 1:
        raise PartitionError(f"num_groups must be >= 1, got {num_groups}")
    h = fnv1a64(example_index.to_bytes(8, "little"), seed=seed)
    return str(h % num_groups).encode("ascii")


def _log_standard_gamma(rng: np.random.Generator, shape: float) -> float:
    """
    Log of a Gamma(shape, 1) draw by Marsaglia-Tsang.

    For shape < 1 the boosting identity Gamma(a) = Gamma(a + 1) * U^(1/a) is
    applied in log space, so tiny concentrations never underflow to zero.
    """
    if shape < 1.0:
        u = 1.0 - rng.random()
        return _log_standard_gamma(rng, shape + 1.0) + math.log(u) / shape
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = rng.standard_normal()
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = rng.random()
        if u < 1.0 - 0.0331 * x**4:
            return math.log(d * v)
        if u > 0.0 and math.log(u) < 0.5 * x * x + d * (1.0 - v + math.log(v)):
            return math.log(d * v)


def sample_dirichlet(rng: np.random.Generator, alphas) -> np.ndarray:
    """Draw one probability vector from Dirichlet(alphas)."""
    logs = np.array([_log_standard_gamma(rng, float(a)) for a in alphas])
    weights = np.exp(logs - logs.max())
    return weights / weights.sum()


@lru_cache(maxsize=4096)
def _cached_group_probs(label: bytes, num_groups: int, alpha: float, seed: int) -> np.ndarray:
    if num_groups == 1:
        probs = np.ones(1)
    else:
        rng = get_rng(seed, "dirichlet-label", label)
        probs = sample_dirichlet(rng, [alpha] * num_groups)
    probs.setflags(write=False)
    return probs


def dirichlet_group_probs(label: bytes, spec: DirichletSpec) -> np.ndarray:
    """Group distribution of one label, a pure function of ``(seed, label)``."""
    return _cached_group_probs(label, spec.num_groups, float(spec.alpha), spec.seed).copy()


def key_dirichlet(example_index: int, label: bytes, spec: DirichletSpec) -> bytes:
    """Sample the example's group from its label's Dirichlet-drawn distribution."""
    probs = _cached_group_probs(label, spec.num_groups, float(spec.alpha), spec.seed)
    if spec.num_groups == 1:
        return b"0"
    u = get_rng(spec.seed, "dirichlet-example", example_index).random()
    cdf = np.cumsum(probs)
    group = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return str(min(group, spec.num_groups - 1)).encode("ascii")


def make_key_fn(config: PartitionConfig) -> KeyFn:
    """Build the ``(example_index, example) -> key`` function for a config."""
    strategy = config.strategy
    if strategy.kind == "by_feature":
        feature = strategy.feature_name

        def by_feature(example_index: int, example: Mapping[str, Any]) -> bytes:
            return key_by_feature(example, feature)

        return by_feature

    if strategy.kind == "random":
        num_groups, seed = strategy.num_groups, config.seed

        def random_key(example_index: int, example: Mapping[str, Any]) -> bytes:
            return key_random(example_index, num_groups, seed)

        return random_key

    spec = config.dirichlet_spec()
    label_field = strategy.label_field

    def dirichlet_key(example_index: int, example: Mapping[str, Any]) -> bytes:
        label = key_by_feature(example, label_field) if label_field else b""
        return key_dirichlet(example_index, label, spec)

    return dirichlet_key
