"""Stable on-disk record formats.

Every artifact the lab persists — transcripts, monitor logs, reports,
mined pairs — is a stream of line-delimited records: one JSON object
per line, keys sorted, compact separators, no NaN/Infinity.  That makes
files diffable, byte-stable across runs and parallelism degrees, and
trivially gzip-compressible (any path ending in ``.gz`` is transparently
compressed).

Records are versioned: each carries ``{"v": SCHEMA_VERSION, "type": ...}``
so future layout changes stay detectable by readers.
"""

from __future__ import annotations

import gzip
import io
import json
import os
from typing import Iterable, Iterator

SCHEMA_VERSION = 1

__all__ = [
    "SCHEMA_VERSION",
    "dump_record",
    "parse_record",
    "versioned",
    "dump_lines",
    "write_jsonl",
    "read_jsonl",
    "iter_jsonl",
]


def dump_record(rec: dict) -> str:
    """One record as a canonical JSON line (no trailing newline)."""
    return json.dumps(rec, sort_keys=True, separators=(",", ":"),
                      allow_nan=False)


def parse_record(line: str) -> dict:
    return json.loads(line)


def versioned(record_type: str, payload: dict) -> dict:
    """Stamp a payload with the schema version and record type."""
    rec = {"v": SCHEMA_VERSION, "type": record_type}
    rec.update(payload)
    return rec


def dump_lines(records: Iterable[dict]) -> str:
    """The full serialized stream, trailing newline included when
    nonempty."""
    lines = [dump_record(r) for r in records]
    return "\n".join(lines) + ("\n" if lines else "")


def _open_text(path, mode: str):
    path = os.fspath(path)
    if path.endswith(".gz"):
        return io.TextIOWrapper(gzip.open(path, mode + "b"),
                                encoding="utf-8", newline="\n")
    return open(path, mode, encoding="utf-8", newline="\n")


def write_jsonl(path, records: Iterable[dict]):
    """Write a record stream; parent directories are created.  Returns
    the path for chaining."""
    path = os.fspath(path)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with _open_text(path, "w") as fh:
        fh.write(dump_lines(records))
    return path


def iter_jsonl(path: str) -> Iterator[dict]:
    with _open_text(path, "r") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def read_jsonl(path: str) -> list[dict]:
    return list(iter_jsonl(path))
