"""Line-delimited JSON helpers with line-number diagnostics."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator

from .errors import MalformedJsonl


def iter_jsonl(
    lines: Iterable[str],
    *,
    lenient: bool = False,
    on_error: Callable[[int, str], None] | None = None,
) -> Iterator[tuple[int, dict[str, Any]]]:
    """Yield ``(line_number, object)`` pairs for every non-blank line.

    Malformed lines raise :class:`MalformedJsonl` with the 1-based line
    number; with ``lenient=True`` they are reported through ``on_error``
    and skipped instead.
    """
    for lineno, raw in enumerate(lines, start=1):
        stripped = raw.strip()
        if not stripped:
            continue
        try:
            obj = json.loads(stripped)
        except json.JSONDecodeError as exc:
            if lenient:
                if on_error is not None:
                    on_error(lineno, str(exc))
                continue
            raise MalformedJsonl(f"line {lineno}: {exc}", line_number=lineno) from exc
        if not isinstance(obj, dict):
            message = f"line {lineno}: expected a JSON object, got {type(obj).__name__}"
            if lenient:
                if on_error is not None:
                    on_error(lineno, message)
                continue
            raise MalformedJsonl(message, line_number=lineno)
        yield lineno, obj


def read_jsonl(path: str | Path, *, lenient: bool = False) -> list[dict[str, Any]]:
    """Read a whole JSONL file into a list of dicts."""
    with open(path, "r", encoding="utf-8") as fh:
        return [obj for _, obj in iter_jsonl(fh, lenient=lenient)]


def write_jsonl(path: str | Path, records: Iterable[dict[str, Any]]) -> int:
    """Write records as one JSON object per line; returns the line count."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False))
            fh.write("\n")
            count += 1
    return count
