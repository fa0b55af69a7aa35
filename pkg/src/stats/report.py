"""CSV writers for dataset statistics."""

import csv
import io
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Tuple, Union

from .models import DatasetSummary, GroupSizeTable

PathLike = Union[str, Path]


def format_key(key: bytes) -> str:
    return key.decode("utf-8", errors="backslashreplace")


def _write_rows(path: PathLike, fieldnames: List[str], rows: Iterable[Dict[str, Any]]) -> Path:
    path = Path(path)
    with io.open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    return path


def write_group_stats_csv(table: GroupSizeTable, path: PathLike) -> Path:
    return _write_rows(
        path,
        ["key", "examples", "words"],
        (
            {"key": format_key(row.key), "examples": row.num_examples, "words": row.num_words}
            for row in table.rows
        ),
    )


def write_summary_csv(summary: DatasetSummary, path: PathLike) -> Path:
    row = summary.to_row()
    return _write_rows(path, list(row), [row])


def write_letter_values_csv(values: Sequence[Tuple[str, float, float]], path: PathLike) -> Path:
    return _write_rows(
        path,
        ["level", "label", "lower", "upper"],
        (
            {"level": level, "label": label, "lower": lower, "upper": upper}
            for level, (label, lower, upper) in enumerate(values)
        ),
    )


def write_qq_points_csv(points: Sequence[Tuple[float, float]], path: PathLike) -> Path:
    return _write_rows(
        path,
        ["theoretical_z", "standardized_log_size"],
        ({"theoretical_z": z, "standardized_log_size": s} for z, s in points),
    )
