"""Report rendering: golden documents, value formatting, file writers."""

from __future__ import annotations

import numpy as np
import pytest

from ngdim.report import (
    SCHEMA,
    format_table,
    format_value,
    render_report,
    write_csv,
    write_text,
)


def test_format_value_cases():
    assert format_value(None) == "none"
    assert format_value(True) == "true"
    assert format_value(False) == "false"
    assert format_value(3) == "3"
    assert format_value(np.int64(-7)) == "-7"
    assert format_value(0.5) == "0.5"
    assert format_value(np.float64(0.1)) == "0.1"
    assert format_value(float("nan")) == "nan"
    assert format_value([1, 2.5, "x"]) == "1,2.5,x"
    assert format_value(np.array([1.0, 2.0])) == "1.0,2.0"
    assert format_value("label") == "label"


def test_format_value_floats_round_trip():
    # repr of a float is the shortest decimal that parses back to the
    # same bits, so reports are exact when read back.
    for x in (1 / 3, 0.1 + 0.2, 2.0**-40, 1e300):
        assert float(format_value(x)) == x


def test_render_report_golden():
    text = render_report(
        "demo",
        sections=[
            ("config", {"n": 100, "alpha": 0.05, "model": "M1", "shift": None}),
            ("result", {"p_value": 0.25}),
        ],
        tables=[
            ("rates", ["k", "rate"], [{"k": 2, "rate": 0.5}, {"k": 3, "rate": 0.05}]),
        ],
    )
    assert text == (
        "ngdim-report 1\n"
        "kind = demo\n"
        "\n"
        "[config]\n"
        "n = 100\n"
        "alpha = 0.05\n"
        "model = M1\n"
        "shift = none\n"
        "\n"
        "[result]\n"
        "p_value = 0.25\n"
        "\n"
        "[table rates]\n"
        "k,rate\n"
        "2,0.5\n"
        "3,0.05\n"
    )
    assert text.startswith(SCHEMA + "\n")
    assert text.endswith("\n")
    assert not text.endswith("\n\n")


def test_render_report_without_tables():
    text = render_report("t", sections=[("s", {"a": 1})])
    assert text == "ngdim-report 1\nkind = t\n\n[s]\na = 1\n"


def test_render_report_is_deterministic():
    args = ("demo", [("s", {"x": 1 / 3})], [("t", ["v"], [{"v": 0.1}])])
    assert render_report(*args) == render_report(*args)


def test_format_table_alignment():
    lines = format_table(
        ["name", "value"],
        [{"name": "alpha", "value": 0.05}, {"name": "n", "value": 10000}],
    )
    assert lines == [
        "name   value",
        "alpha  0.05",
        "n      10000",
    ]
    # no trailing spaces anywhere
    assert all(line == line.rstrip() for line in lines)


def test_format_table_empty_rows():
    assert format_table(["a", "bb"], []) == ["a  bb"]


def test_write_text_and_csv(tmp_path):
    text_path = tmp_path / "out.txt"
    write_text(text_path, "hello\n")
    assert text_path.read_text(encoding="utf-8") == "hello\n"

    csv_path = tmp_path / "out.csv"
    write_csv(csv_path, ["a", "b"], [{"a": 1, "b": 0.5}, {"a": 2, "b": None}])
    # CSV uses CRLF row endings (RFC 4180), fixed across platforms
    assert csv_path.read_bytes() == b"a,b\r\n1,0.5\r\n2,none\r\n"


def test_write_csv_round_trips_floats(tmp_path):
    import csv as _csv

    path = tmp_path / "vals.csv"
    rows = [{"x": 1 / 3}, {"x": 0.1 + 0.2}]
    write_csv(path, ["x"], rows)
    with open(path, newline="", encoding="utf-8") as handle:
        parsed = [float(r["x"]) for r in _csv.DictReader(handle)]
    assert parsed == [1 / 3, 0.1 + 0.2]
