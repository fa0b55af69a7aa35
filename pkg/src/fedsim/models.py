"""
Data models for federated training simulation.

This module defines the optimizer state, client updates, learning-rate
schedules, round configuration and the reports produced by training and
personalization.
"""

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from ..errors import GrouperError
from ..stats import QuantileSummary

ALGORITHMS = ("fedavg", "fedsgd")
SCHEDULES = ("constant", "warmup_exponential", "warmup_cosine")
SERVER_OPTIMIZERS = ("adam", "sgd")


class FedSimError(GrouperError):
    """Base exception for training simulation errors."""
    pass


class DimensionMismatchError(FedSimError, ValueError):
    pass


class NoPredictionPositionsError(FedSimError, ValueError):
    """Raised when a batch has no non-pad target positions."""
    pass


class NonFiniteError(FedSimError, ValueError):
    """Raised when an optimizer input holds NaN or infinity."""
    pass


class ScheduleError(FedSimError, ValueError):
    pass


class CheckpointError(FedSimError):
    pass


class DivergenceError(FedSimError):
    """Raised when a loss or gradient stops being finite."""

    def __init__(self, round_index: int, client_key: bytes, metrics: Optional[list] = None):
        super().__init__(round_index, client_key)
        self.round_index = round_index
        self.client_key = client_key
        self.metrics = list(metrics or [])

    def __reduce__(self):
        return (self.__class__, (self.round_index, self.client_key, self.metrics))

    def __str__(self) -> str:
        return f"training diverged in round {self.round_index} on client {self.client_key!r}"


@dataclass
class AdamState:
    """Server Adam moments; ``step`` counts completed updates."""
    step: int
    m: np.ndarray
    v: np.ndarray
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def fresh(cls, dimension: int) -> "AdamState":
        return cls(step=0, m=np.zeros(dimension), v=np.zeros(dimension))


@dataclass
class ClientUpdate:
    """What one client sends back: ``delta = x_start - x_end``."""
    delta: np.ndarray
    mean_loss: float
    num_batches: int
    client_key: bytes = b""


@dataclass(frozen=True)
class ScheduleSpec:
    kind: str
    eta_max: float
    total_rounds: int
    warmup_fraction: float = 0.1

    def __post_init__(self):
        if self.kind not in SCHEDULES:
            raise ScheduleError(
                f"unknown schedule {self.kind!r}; expected one of {', '.join(SCHEDULES)}"
            )
        if not self.eta_max > 0:
            raise ScheduleError(f"eta_max must be > 0, got {self.eta_max}")
        if self.total_rounds < 1:
            raise ScheduleError(f"total_rounds must be >= 1, got {self.total_rounds}")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ScheduleError(f"warmup_fraction must lie in [0, 1), got {self.warmup_fraction}")

    @property
    def warmup_rounds(self) -> int:
        # at least one round is left for decay
        warmup = math.ceil(round(self.warmup_fraction * self.total_rounds, 9))
        return min(warmup, self.total_rounds - 1)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class RoundConfig:
    """Everything a training run depends on besides the dataset and the round count."""
    algorithm: str
    schedule: ScheduleSpec
    eta_c: float = 0.1
    cohort_size: int = 16
    batches_per_client: int = 64
    batch_size: int = 16
    examples_per_client: Optional[int] = None
    seed: int = 0
    server_optimizer: str = "adam"
    vocab_size: int = 64
    seq_len: int = 129
    text_field: str = "text"
    workers: int = 1

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise FedSimError(
                f"unknown algorithm {self.algorithm!r}; expected one of {', '.join(ALGORITHMS)}"
            )
        if self.server_optimizer not in SERVER_OPTIMIZERS:
            raise FedSimError(f"unknown server optimizer {self.server_optimizer!r}")
        for name in ("cohort_size", "batches_per_client", "batch_size", "workers"):
            if getattr(self, name) < 1:
                raise FedSimError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.eta_c < 0:
            raise FedSimError(f"eta_c must be >= 0, got {self.eta_c}")
        expected = self.batches_per_client * self.batch_size
        if self.examples_per_client is None:
            self.examples_per_client = expected
        elif self.examples_per_client != expected:
            raise FedSimError(
                f"examples_per_client ({self.examples_per_client}) must equal "
                f"batches_per_client * batch_size ({expected})"
            )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class RoundMetrics:
    round: int
    algorithm: str
    lr: float
    mean_loss: float


@dataclass
class TrainingResult:
    params: np.ndarray
    metrics: List[RoundMetrics] = field(default_factory=list)
    state: Optional[AdamState] = None


@dataclass(frozen=True)
class PersonalizationResult:
    client_key: bytes
    pre_loss: float
    post_loss: float


@dataclass
class PersonalizationReport:
    """Per-client losses before and after fine-tuning, with their quantiles."""
    results: List[PersonalizationResult]
    pre_summary: QuantileSummary
    post_summary: QuantileSummary

    @classmethod
    def from_results(cls, results: List[PersonalizationResult]) -> "PersonalizationReport":
        if not results:
            raise FedSimError("no clients were evaluated")
        return cls(
            results=list(results),
            pre_summary=QuantileSummary.from_values([r.pre_loss for r in results]),
            post_summary=QuantileSummary.from_values([r.post_loss for r in results]),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "num_clients": len(self.results),
            "pre_loss": self.pre_summary.to_dict(),
            "post_loss": self.post_summary.to_dict(),
        }
