"""Tests for artifact writers and readers"""
import math

import numpy as np
import pandas as pd

from src.exporters.record_exporter import RecordExporter, to_jsonable
from src.metrics.poincare import histogram


def test_to_jsonable():
    data = {"a": np.float64(1.5), "b": np.int64(2), "c": math.nan, "d": np.array([1.0, np.inf]), "e": np.bool_(True)}
    assert to_jsonable(data) == {"a": 1.5, "b": 2, "c": None, "d": [1.0, None], "e": True}


def test_jsonl_append_and_truncate(tmp_path):
    path = tmp_path / "records.jsonl"
    RecordExporter.write_jsonl([{"s": 0}, {"s": 1}], path)
    RecordExporter.append_jsonl({"s": 2}, path)
    assert [r["s"] for r in RecordExporter.read_jsonl(path)] == [0, 1, 2]
    assert RecordExporter.truncate_jsonl(path, lambda r: r["s"] <= 1) == 2
    assert [r["s"] for r in RecordExporter.read_jsonl(path)] == [0, 1]
    assert RecordExporter.read_jsonl(tmp_path / "missing.jsonl") == []


def test_json_is_key_sorted(tmp_path):
    path = tmp_path / "meta.json"
    RecordExporter.write_json({"b": 1, "a": 2}, path)
    assert path.read_text().index('"a"') < path.read_text().index('"b"')
    assert RecordExporter.read_json(tmp_path / "none.json") is None


def test_population_checkpoint(tmp_path):
    path = tmp_path / "pop.npz"
    thetas = np.arange(24.0).reshape(2, 12)
    RecordExporter.save_population(thetas, np.array([1.0, np.inf]), 7, path)
    loaded_thetas, eps, segment = RecordExporter.load_population(path)
    np.testing.assert_array_equal(loaded_thetas, thetas)
    assert np.isinf(eps[1]) and segment == 7
    assert RecordExporter.load_population(tmp_path / "none.npz") is None


def test_pools(tmp_path):
    path = tmp_path / "pools.npz"
    RecordExporter.save_pools({"r_fp": np.array([1.0, 2.0]), "d_sp": np.empty(0)}, path)
    pools = RecordExporter.load_pools(path)
    assert pools["r_fp"].tolist() == [1.0, 2.0]
    assert pools["d_sp"].size == 0


def test_debug_dumps(tmp_path):
    RecordExporter.dump_histogram(histogram([600.0, 610.0, 620.0]), tmp_path / "h.csv")
    frame = pd.read_csv(tmp_path / "h.csv", index_col=0)
    assert frame.shape == (31, 31)
    assert frame.loc[600, "600"] == 2

    RecordExporter.dump_simulation(np.array([0.0, 500.0, 1100.0]), tmp_path / "s.csv")
    sim = pd.read_csv(tmp_path / "s.csv")
    assert sim["rr_ms"].tolist()[1:] == [500.0, 600.0]

    RecordExporter.dump_samples({"r_fp": np.array([1.0]), "d_sp": np.array([2.0, 3.0])}, tmp_path / "x.csv")
    assert len(pd.read_csv(tmp_path / "x.csv")) == 3
