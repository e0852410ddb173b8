"""Versioned record serialization: canonical bytes and round-trips."""

import gzip

import pytest

from tilelab.records import (
    SCHEMA_VERSION,
    dump_lines,
    dump_record,
    iter_jsonl,
    parse_record,
    read_jsonl,
    versioned,
    write_jsonl,
)


class TestDumpRecord:
    def test_canonical_bytes_are_key_sorted_and_compact(self):
        # [TRIVIAL] canonical form: sorted keys, no whitespace.
        rec = {"b": 1, "a": [1, 2], "c": {"z": None, "y": True}}
        assert dump_record(rec) == '{"a":[1,2],"b":1,"c":{"y":true,"z":null}}'

    def test_round_trip(self):
        rec = versioned("outcome", {"winners": [0, 2], "rate": 0.25})
        assert parse_record(dump_record(rec)) == rec

    def test_dump_is_deterministic_across_dict_orderings(self):
        a = {"x": 1, "y": 2}
        b = {"y": 2, "x": 1}
        assert dump_record(a) == dump_record(b)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            dump_record({"x": float("nan")})

    def test_versioned_stamps_schema(self):
        rec = versioned("header", {"game": 3})
        assert rec["v"] == SCHEMA_VERSION
        assert rec["type"] == "header"
        assert rec["game"] == 3

    def test_dump_lines_trailing_newline(self):
        text = dump_lines([{"a": 1}, {"b": 2}])
        assert text.endswith("\n")
        assert text.count("\n") == 2
        assert dump_lines([]) == ""


class TestJsonlFiles:
    def test_write_then_read(self, tmp_path):
        path = tmp_path / "nested" / "stream.jsonl"
        recs = [versioned("header", {"i": i}) for i in range(5)]
        write_jsonl(path, recs)
        assert read_jsonl(path) == recs
        assert list(iter_jsonl(path)) == recs

    def test_gzip_transparent(self, tmp_path):
        path = tmp_path / "stream.jsonl.gz"
        recs = [{"i": i} for i in range(100)]
        write_jsonl(path, recs)
        assert read_jsonl(path) == recs
        with gzip.open(path, "rt", encoding="utf-8") as fh:
            raw = fh.read()
        assert raw == dump_lines(recs)

    def test_rewrite_is_byte_identical(self, tmp_path):
        recs = [versioned("fault", {"kind": "misdetection", "t": 1.5})] * 3
        p1 = tmp_path / "a.jsonl"
        p2 = tmp_path / "b.jsonl"
        write_jsonl(p1, recs)
        write_jsonl(p2, recs)
        assert p1.read_bytes() == p2.read_bytes()
