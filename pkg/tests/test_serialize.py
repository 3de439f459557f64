import math

import numpy as np
import pytest

from cxreport.errors import IoError, MalformedFile
from cxreport.serialize import (
    dump_json,
    dump_jsonl,
    dumps,
    format_float,
    load_json,
    load_jsonl,
)


def test_format_float_lossless_for_random_doubles():
    rng = np.random.default_rng(8)
    for x in rng.standard_normal(200) * 10.0 ** rng.integers(-12, 12, 200):
        assert float(format_float(float(x))) == float(x)


def test_format_float_integral_values():
    assert format_float(1.0) == "1"
    assert format_float(-0.5) == "-0.5"


def test_dumps_rejects_non_finite():
    with pytest.raises(MalformedFile):
        dumps({"x": math.inf})


def test_json_roundtrip_nested(tmp_path):
    path = tmp_path / "x.json"
    obj = {"a": [1.0, 2.5, -3.125], "b": {"c": "text", "d": None, "e": True}}
    dump_json(path, obj)
    assert load_json(path) == obj


def test_json_numpy_arrays_serialized_as_lists(tmp_path):
    path = tmp_path / "x.json"
    dump_json(path, {"v": np.array([1.0, 0.25])})
    assert load_json(path) == {"v": [1.0, 0.25]}


def test_jsonl_roundtrip_one_object_per_line(tmp_path):
    path = tmp_path / "x.jsonl"
    rows = [{"i": i, "v": [0.5 * i]} for i in range(4)]
    dump_jsonl(path, rows)
    text = path.read_text()
    assert text.count("\n") == 4
    assert all("\n" not in line or line == "" for line in text.split("\n"))
    assert load_jsonl(path) == rows


def test_load_json_malformed(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{nope")
    with pytest.raises(MalformedFile):
        load_json(path)


def test_load_json_missing_file():
    with pytest.raises(IoError):
        load_json("/nonexistent/file.json")
