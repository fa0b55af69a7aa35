"""
Dataset statistics module.

Per-group and per-example word counts, exact quantiles, letter values and
log-normal Q-Q points, written out as CSV tables.
"""

from .groups import (
    compute_group_stats,
    count_words,
    dataset_summary,
    label_histograms,
    mean_pairwise_tv,
    payload_text,
    total_variation,
)
from .models import (
    SUMMARY_PROBABILITIES,
    DatasetSummary,
    DecodeError,
    DomainError,
    EmptyInputError,
    GroupSizeTable,
    GroupStatsRow,
    NonPositiveSizeError,
    QuantileSummary,
    StatsError,
    ZeroVarianceError,
)
from .quantiles import exact_quantile, inv_normal_cdf, letter_values, qq_lognormal_points
from .report import (
    write_group_stats_csv,
    write_letter_values_csv,
    write_qq_points_csv,
    write_summary_csv,
)

__all__ = [
    "SUMMARY_PROBABILITIES",
    "DatasetSummary",
    "DecodeError",
    "DomainError",
    "EmptyInputError",
    "GroupSizeTable",
    "GroupStatsRow",
    "NonPositiveSizeError",
    "QuantileSummary",
    "StatsError",
    "ZeroVarianceError",
    "compute_group_stats",
    "count_words",
    "dataset_summary",
    "exact_quantile",
    "inv_normal_cdf",
    "label_histograms",
    "letter_values",
    "mean_pairwise_tv",
    "payload_text",
    "qq_lognormal_points",
    "total_variation",
    "write_group_stats_csv",
    "write_letter_values_csv",
    "write_qq_points_csv",
    "write_summary_csv",
]
