import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ldthermo import Grid, DensityEstimate
from ldthermo.report import (ReportHeader, config_hash, density_columns, emit_report, jsonable, write_csv,
                             write_json)

HDR = ReportHeader.for_config({"epsilon": 0.1}, seed=3)


def _read_csv(path):
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        names = fh.readline().rstrip("\n").split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
    return header, names, data


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=20))
def test_csv_round_trip_is_exact(tmp_path_factory, vals):
    path = tmp_path_factory.mktemp("csv") / "t.csv"
    write_csv(path, {"a": vals, "b": np.arange(len(vals))}, HDR)
    header, names, data = _read_csv(path)
    assert header == HDR.line()
    assert names == ["a", "b"]
    assert np.array_equal(data[:, 0], np.array(vals))


def test_json_round_trip_and_header(tmp_path):
    payload = {"z": np.float64(1 / 3), "a": np.arange(3), "flag": np.bool_(True), "bad": float("inf")}
    path = emit_report(payload, tmp_path, "s", "json", HDR)
    doc = json.load(open(path))
    assert doc["z"] == 1 / 3 and doc["a"] == [0, 1, 2] and doc["flag"] is True and doc["bad"] == "inf"
    assert doc["header"] == {"tool": "ldthermo", "version": HDR.version, "seed": 3,
                             "config_hash": HDR.config_hash}
    assert list(doc) == sorted(doc)


def test_output_is_byte_identical(tmp_path):
    g = Grid.uniform(-1, 1, 11)
    d = DensityEstimate.gaussian(g, [0.0], [[0.1]], 0.1)
    a = emit_report(density_columns(d), tmp_path / "a", "density", "csv", HDR)
    b = emit_report(density_columns(d), tmp_path / "b", "density", "csv", HDR)
    assert open(a, "rb").read() == open(b, "rb").read()


def test_config_hash_is_order_independent():
    assert config_hash({"a": 1, "b": [1.0, 2.0]}) == config_hash({"b": [1.0, 2.0], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})
    assert len(config_hash({})) == 16


def test_rejections(tmp_path):
    with pytest.raises(ValueError):
        emit_report({}, tmp_path, "x", "csv", HDR)
    with pytest.raises(ValueError):
        emit_report({"a": [1]}, tmp_path, "x", "xml", HDR)
    with pytest.raises(ValueError):
        write_csv(tmp_path / "x.csv", {"a": [1, 2], "b": [1]}, HDR)


def test_jsonable_nested():
    assert jsonable({"a": (np.int64(2), [np.float32(0.5)])}) == {"a": [2, [0.5]]}
    assert jsonable(float("nan")) == "nan"
