"""
Data models for dataset statistics.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Sequence

from ..errors import GrouperError

SUMMARY_PROBABILITIES = (0.10, 0.25, 0.50, 0.75, 0.90)


class StatsError(GrouperError):
    """Base exception for statistics errors."""
    pass


class EmptyInputError(StatsError, ValueError):
    pass


class DomainError(StatsError, ValueError):
    """Raised when an argument is outside the domain of a function."""
    pass


class NonPositiveSizeError(StatsError, ValueError):
    pass


class ZeroVarianceError(StatsError, ValueError):
    """Raised when log sizes have no spread to standardize by."""
    pass


class DecodeError(StatsError):
    """Raised when an example payload cannot be read as text."""

    def __init__(self, group: bytes, example_index: int, reason: str = ""):
        super().__init__(group, example_index, reason)
        self.group = group
        self.example_index = example_index
        self.reason = reason

    def __str__(self) -> str:
        message = f"cannot decode example {self.example_index} of group {self.group!r}"
        return f"{message}: {self.reason}" if self.reason else message


@dataclass(frozen=True)
class GroupStatsRow:
    key: bytes
    num_examples: int
    num_words: int


@dataclass
class GroupSizeTable:
    """One row per group, sorted by key."""
    rows: List[GroupStatsRow] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def num_examples(self) -> int:
        return sum(row.num_examples for row in self.rows)

    @property
    def num_words(self) -> int:
        return sum(row.num_words for row in self.rows)


@dataclass(frozen=True)
class QuantileSummary:
    """Values at the 10th, 25th, 50th, 75th and 90th percentiles."""
    p10: float
    p25: float
    p50: float
    p75: float
    p90: float

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "QuantileSummary":
        from .quantiles import exact_quantile

        return cls(*(exact_quantile(values, q) for q in SUMMARY_PROBABILITIES))

    def as_list(self) -> List[float]:
        return [self.p10, self.p25, self.p50, self.p75, self.p90]

    def to_dict(self) -> Dict[str, float]:
        return {"p10": self.p10, "p25": self.p25, "p50": self.p50, "p75": self.p75, "p90": self.p90}


@dataclass
class DatasetSummary:
    """Totals plus per-group and per-example distribution summaries."""
    num_groups: int
    num_examples: int
    num_words: int
    examples_per_group: QuantileSummary
    words_per_group: QuantileSummary
    words_per_example: QuantileSummary
    mean_words_per_group: float
    mean_words_per_example: float
    log_words_mu: float
    log_words_sigma: float

    def to_row(self) -> Dict[str, Any]:
        """Flatten into one CSV row."""
        row: Dict[str, Any] = {
            "num_groups": self.num_groups,
            "num_examples": self.num_examples,
            "num_words": self.num_words,
            "mean_words_per_group": self.mean_words_per_group,
            "mean_words_per_example": self.mean_words_per_example,
            "log_words_mu": self.log_words_mu,
            "log_words_sigma": self.log_words_sigma,
        }
        for prefix, summary in (
            ("examples_per_group", self.examples_per_group),
            ("words_per_group", self.words_per_group),
            ("words_per_example", self.words_per_example),
        ):
            for name, value in summary.to_dict().items():
                row[f"{prefix}_{name}"] = value
        return row
