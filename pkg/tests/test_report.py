"""Report serialization: canonical JSON, schema validation, sections."""

import json
from pathlib import Path

import numpy as np
import pytest

from ionoptics import InvalidInputError
from ionoptics.report import (
    REPORT_SCHEMA_VERSION,
    canonical_json,
    report_schema,
    run_block,
    to_plain,
    validate_report,
    write_report,
)

REPO_ROOT = Path(__file__).resolve().parents[1]


def minimal_report():
    return {
        "report_schema_version": REPORT_SCHEMA_VERSION,
        "command": "crystal",
        "toolkit": {"name": "ionoptics", "version": "0.1.0"},
        "run": run_block(0.25),
        "scenario": {"name": "unit"},
    }


def test_schema_version_is_one():
    assert REPORT_SCHEMA_VERSION == 1


def test_canonical_json_is_sorted_and_terminated():
    text = canonical_json({"b": 1, "a": [2, 3]})
    assert text == '{\n  "a": [\n    2,\n    3\n  ],\n  "b": 1\n}\n'


def test_canonical_json_order_independent():
    first = canonical_json({"x": 1, "y": {"k": 2, "j": 3}})
    second = canonical_json({"y": {"j": 3, "k": 2}, "x": 1})
    assert first == second


def test_to_plain_converts_numpy():
    plain = to_plain(
        {
            "array": np.array([1.0, 2.0]),
            "scalar": np.float64(3.5),
            "integer": np.int64(7),
            "flag": np.bool_(True),
            "nested": (np.array([0.5]), "text"),
        }
    )
    assert plain == {
        "array": [1.0, 2.0],
        "scalar": 3.5,
        "integer": 7,
        "flag": True,
        "nested": [[0.5], "text"],
    }
    json.dumps(plain)


def test_to_plain_rejects_non_finite():
    with pytest.raises(InvalidInputError):
        to_plain({"bad": float("nan")})
    with pytest.raises(InvalidInputError):
        to_plain({"bad": np.inf})


def test_minimal_report_validates():
    validate_report(minimal_report())


def test_validate_rejects_wrong_version():
    report = minimal_report()
    report["report_schema_version"] = 99
    with pytest.raises(InvalidInputError):
        validate_report(report)


def test_validate_rejects_unknown_top_key():
    report = minimal_report()
    report["debug_notes"] = "scratch"
    with pytest.raises(InvalidInputError):
        validate_report(report)


def test_validate_rejects_missing_section():
    report = minimal_report()
    del report["toolkit"]
    with pytest.raises(InvalidInputError):
        validate_report(report)


def test_run_block_shape():
    block = run_block(1.5)
    assert set(block) == {"generated_at_utc", "wall_time_s"}
    assert block["wall_time_s"] == 1.5
    assert block["generated_at_utc"].endswith("+00:00")


def test_write_report_validates_and_is_canonical(tmp_path):
    path = tmp_path / "out.json"
    report = minimal_report()
    write_report(report, path)
    text = path.read_text()
    assert text == canonical_json(to_plain(report))
    assert text.endswith("\n")
    bad = minimal_report()
    bad["command"] = "paint"
    with pytest.raises(InvalidInputError):
        write_report(bad, tmp_path / "bad.json")


def test_docs_schema_matches_packaged_schema():
    # the schema published in docs must stay in lockstep with the package
    docs_schema = json.loads((REPO_ROOT / "docs" / "report.schema.json").read_text())
    assert docs_schema == report_schema()
