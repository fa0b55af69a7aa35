"""
Input corpus readers.

Supported formats: newline-delimited JSON objects, plain text (one example per
line, exposed as ``{"text": line}``) and CSV with a header row.
"""

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, Optional, Union

from .models import PartitionError

Example = Dict[str, Any]

FORMAT_BY_SUFFIX = {
    ".jsonl": "jsonl",
    ".ndjson": "jsonl",
    ".json": "jsonl",
    ".txt": "text",
    ".text": "text",
    ".csv": "csv",
}


class CorpusFormatError(PartitionError):
    """Raised when an input corpus cannot be parsed."""
    pass


def read_jsonl(path: Union[str, Path]) -> Iterator[Example]:
    with io.open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}:{line_number}: invalid JSON: {exc}") from exc
            if not isinstance(record, dict):
                raise CorpusFormatError(f"{path}:{line_number}: expected a JSON object")
            yield record


def read_text_lines(path: Union[str, Path]) -> Iterator[Example]:
    with io.open(path, "r", encoding="utf-8", newline="") as f:
        for line in f:
            yield {"text": line.rstrip("\r\n")}


def read_csv(path: Union[str, Path]) -> Iterator[Example]:
    with io.open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            return
        for row in reader:
            yield dict(row)


READERS = {"jsonl": read_jsonl, "text": read_text_lines, "csv": read_csv}


def infer_format(path: Union[str, Path]) -> str:
    suffix = Path(path).suffix.lower()
    if suffix not in FORMAT_BY_SUFFIX:
        raise CorpusFormatError(
            f"cannot infer corpus format of {path}; pass one of {', '.join(READERS)}"
        )
    return FORMAT_BY_SUFFIX[suffix]


def serialize_payload(example: Example, payload_format: str) -> bytes:
    """Canonical payload bytes of an example."""
    if payload_format == "text":
        return str(example.get("text", "")).encode("utf-8")
    return json.dumps(
        example, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")


@dataclass
class CorpusSource:
    """An iterable of examples and the payload format they are stored in."""
    examples: Iterable[Example]
    payload_format: str = "json"

    def __iter__(self) -> Iterator[Example]:
        return iter(self.examples)


def open_corpus(path: Union[str, Path], corpus_format: Optional[str] = None) -> CorpusSource:
    """Open a corpus file; plain text is stored as raw text payloads."""
    corpus_format = corpus_format or infer_format(path)
    if corpus_format not in READERS:
        raise CorpusFormatError(f"unknown corpus format {corpus_format!r}")
    if not Path(path).exists():
        raise FileNotFoundError(f"corpus file not found: {path}")
    payload_format = "text" if corpus_format == "text" else "json"
    return CorpusSource(examples=READERS[corpus_format](path), payload_format=payload_format)
