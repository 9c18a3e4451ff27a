import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from molelab import io
from molelab.parallel import WORKERS_ENV, Failure, WorkerPool, resolve_workers


def test_empty_records_header_only(tmp_path):
    p = io.emit_csv([], ["a", "b"], tmp_path / "e.csv")
    assert p.read_text() == "a,b\n"


def test_column_order_follows_schema(tmp_path):
    p = io.emit_csv([{"b": 2, "a": 1.5, "c": True}], ["c", "a", "b"], tmp_path / "o.csv")
    assert p.read_text().splitlines() == ["c,a,b", "true,1.5,2"]


def test_schema_mismatch(tmp_path):
    with pytest.raises(ValueError, match="missing"):
        io.emit_csv([{"a": 1}], ["a", "b"], tmp_path / "x.csv")
    with pytest.raises(ValueError, match="fields"):
        io.emit_csv([[1, 2, 3]], ["a", "b"], tmp_path / "x.csv")
    with pytest.raises(ValueError, match="duplicate"):
        io.emit_csv([], ["a", "a"], tmp_path / "x.csv")


def test_partial_file_left_on_error(tmp_path):
    def rows():
        yield [1, 2]
        raise RuntimeError("interrupted")

    with pytest.raises(RuntimeError):
        io.emit_csv(rows(), ["a", "b"], tmp_path / "r.csv")
    assert not (tmp_path / "r.csv").exists()
    assert (tmp_path / "r.csv.partial").read_text().startswith("a,b\n1,2\n")


@settings(max_examples=500, deadline=None)
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_round_trip_12_digits(x):
    back = float(io.format_float(x))
    assert back == float("%.12g" % x)
    if x != 0:
        assert abs(back - x) <= abs(x) * 5e-12
    # the text is stable: formatting the parsed value gives the same string
    assert io.format_float(back) == io.format_float(x)


def test_special_floats():
    assert io.format_float(-0.0) == "0"
    assert io.format_float(float("nan")) == "nan"
    assert io.format_float(float("-inf")) == "-inf"
    assert io.format_float(np.float32(0.5)) == "0.5"


def test_write_json_numpy(tmp_path):
    p = io.write_json({"b": np.arange(3), "a": np.float64(1.5), "n": np.int64(2)}, tmp_path / "j.json")
    assert p.read_text() == '{\n  "a": 1.5,\n  "b": [\n    0,\n    1,\n    2\n  ],\n  "n": 2\n}\n'


def square(x):
    return x * x


def boom(x):
    if x == 3:
        raise ValueError("bad input")
    return x


def test_resolve_workers(monkeypatch):
    monkeypatch.delenv(WORKERS_ENV, raising=False)
    assert resolve_workers(3) == 3
    assert resolve_workers() == (os.cpu_count() or 1)
    monkeypatch.setenv(WORKERS_ENV, "2")
    assert resolve_workers(7) == 2
    monkeypatch.setenv(WORKERS_ENV, "zero")
    with pytest.raises(ValueError):
        resolve_workers()
    monkeypatch.setenv(WORKERS_ENV, "0")
    with pytest.raises(ValueError):
        resolve_workers()


@pytest.mark.parametrize("workers", [1, 3])
def test_pool_preserves_order_and_reports_failures(monkeypatch, workers):
    monkeypatch.delenv(WORKERS_ENV, raising=False)
    with WorkerPool(workers) as pool:
        assert pool.starmap(square, [(k,) for k in range(50)]) == [k * k for k in range(50)]
        out = pool.starmap(boom, [(k,) for k in range(6)])
    assert isinstance(out[3], Failure) and "bad input" in out[3].error
    assert [o for k, o in enumerate(out) if k != 3] == [0, 1, 2, 4, 5]
