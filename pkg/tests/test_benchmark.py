import csv
import json
import os

import numpy as np
import pytest

from lstm_compress import benchmark, dataset, nn_core
from lstm_compress.benchmark import (
    PUBLISHED_PARAM_COUNTS,
    SweepReport,
    emit_report,
    load_report,
    measure_latency,
    measure_memory,
    model_size,
    param_count,
    run_sweep,
    size_reduction_percent,
)
from lstm_compress.nn_core import ModelConfig
from lstm_compress.prepared import prepare
from lstm_compress.training import TrainConfig, build_header, save_model


def test_param_count_examples():
    assert param_count(ModelConfig(hidden_units=32)) == 5_665
    assert param_count(ModelConfig(hidden_units=16)) == 1_536 + 272 + 17 == 1_825
    with pytest.raises(ValueError):
        ModelConfig(hidden_units=0)


@pytest.mark.parametrize("h", [16, 32, 48, 64, 128])
def test_param_count_matches_construction(h):
    cfg = ModelConfig(hidden_units=h)
    assert param_count(cfg) == nn_core.init_weights(cfg, 0).param_count()


@pytest.mark.parametrize("count,nbytes,kb", [(71_809, 287_236, 280), (19_521, 78_084, 76), (11_569, 46_276, 45),
                                             (5_665, 22_660, 22), (1_857, 7_428, 7), (0, 0, 0)])
def test_model_size(count, nbytes, kb):
    s = model_size(count)
    assert s.bytes == nbytes and s.kb_display == kb
    assert s.kb == round(nbytes / 1024, 1)


def test_size_reduction():
    base = model_size(PUBLISHED_PARAM_COUNTS[128]).bytes
    assert size_reduction_percent(model_size(PUBLISHED_PARAM_COUNTS[64]).bytes, base) == pytest.approx(72.8, abs=0.05)
    assert size_reduction_percent(base, base) == 0.0
    reds = [size_reduction_percent(model_size(param_count(ModelConfig(hidden_units=h))).bytes,
                                   model_size(param_count(ModelConfig(hidden_units=128))).bytes)
            for h in (128, 64, 48, 32, 16)]
    assert all(a < b for a, b in zip(reds, reds[1:]))


@pytest.fixture(scope="module")
def model_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("models")
    paths = {}
    for h in (16, 128):
        cfg = ModelConfig(hidden_units=h)
        paths[h] = d / f"m{h}.tlsb"
        save_model(paths[h], nn_core.init_weights(cfg, 0), cfg, build_header(cfg))
    return paths


def test_latency_rejects_few_reps(model_files):
    w = np.zeros((30, 7))
    with pytest.raises(ValueError):
        measure_latency(model_files[16], w, reps=99)
    with pytest.raises(ValueError):
        measure_latency(model_files[16], w, warmup=9)


def test_latency_stats_and_relation(model_files):
    w = np.random.default_rng(0).random((30, 7))
    s16 = measure_latency(model_files[16], w, reps=300)
    s128 = measure_latency(model_files[128], w, reps=300)
    assert s16.p5_ms <= s16.median_ms <= s16.p95_ms
    assert s16.median_ms <= s128.median_ms * benchmark.LATENCY_TOLERANCE


def test_latency_repeat_stability(model_files):
    w = np.random.default_rng(0).random((30, 7))
    a = measure_latency(model_files[16], w, reps=500).median_ms
    b = measure_latency(model_files[16], w, reps=500).median_ms
    assert abs(a - b) / min(a, b) <= 0.20


def test_memory(model_files):
    m16 = measure_memory(model_files[16])
    m128 = measure_memory(model_files[128])
    assert m16 is not None and m128 is not None
    nbytes = model_size(param_count(ModelConfig(hidden_units=128))).bytes
    assert m128 >= nbytes / 2**20
    assert m128 >= m16 - 2.0


def test_memory_unavailable(monkeypatch, model_files):
    monkeypatch.delattr(os, "wait4")
    assert measure_memory(model_files[16]) is None


@pytest.fixture(scope="module")
def tiny_data():
    spec = dataset.SyntheticSpec(n_days=150, noise_std=2.0, seed=1)
    return prepare(dataset.generate_synthetic_dataset(spec, 2, 1))


def test_single_variant_sweep(tmp_path, tiny_data):
    rep = run_sweep(tiny_data, [128], TrainConfig(epochs=1), repetitions=2, out_dir=tmp_path, measure_mem=False)
    assert len(rep.rows) == 1
    assert rep.ttests == {}
    assert rep.rows[0].size_reduction_percent == 0.0


def test_sweep_notes_insufficient_reps(tmp_path, tiny_data):
    rep = run_sweep(tiny_data, [64, 16], TrainConfig(epochs=1), repetitions=1, out_dir=tmp_path, measure_mem=False)
    assert rep.ttests == {}
    assert any("insufficient repetitions" in n for n in rep.notes)


@pytest.mark.slow
def test_full_sweep_synthetic(tmp_path):
    spec = dataset.SyntheticSpec(n_days=800, noise_std=3.0, seed=0)
    data = prepare(dataset.generate_synthetic_dataset(spec, 5, 1))
    rep = run_sweep(data, benchmark.VALID_HIDDEN, TrainConfig(epochs=1), repetitions=2, out_dir=tmp_path)
    assert [r.hidden_units for r in rep.rows] == [128, 64, 48, 32, 16]
    for r in rep.rows:
        assert r.param_count == param_count(ModelConfig(hidden_units=r.hidden_units))
        assert r.model_bytes == os.path.getsize(tmp_path / "models" / f"lstm-{r.hidden_units}.tlsb") - \
            _header_len(tmp_path / "models" / f"lstm-{r.hidden_units}.tlsb")
        assert len(r.mape_runs) == 2 and r.peak_rss_mb is not None
    assert set(rep.ttests) == {"64_vs_128", "64_vs_32", "64_vs_16"}
    assert "u_shape_replicates" in rep.flags
    files = emit_report(rep, tmp_path)
    assert {p.name for p in files} == {"sweep_report.json", "table1.csv", "table3.csv", "fig_error_vs_size.csv",
                                       "fig_tradeoff.csv", "report.md"}


def _header_len(path):
    blob = path.read_bytes()
    return 10 + int.from_bytes(blob[6:10], "little")


def test_sweep_partial_results_on_failure(tmp_path, tiny_data, monkeypatch):
    real = benchmark.train

    def failing(cfg, tc, windows, validation=None):
        if cfg.hidden_units == 32:
            raise nn_core.NumericalError("forced")
        return real(cfg, tc, windows)

    monkeypatch.setattr(benchmark, "train", failing)
    with pytest.raises(nn_core.NumericalError):
        run_sweep(tiny_data, [64, 32, 16], TrainConfig(epochs=1), repetitions=1, out_dir=tmp_path)
    partial = json.loads((tmp_path / "sweep_report.partial.json").read_text())
    assert [r["hidden_units"] for r in partial["rows"]] == [64]
    assert "aborted" in partial["notes"][0]


def test_sweep_deterministic_accuracy(tmp_path, tiny_data):
    tc = TrainConfig(epochs=1, seed=3)
    a = run_sweep(tiny_data, [32, 16], tc, 2, tmp_path / "a", measure_mem=False)
    b = run_sweep(tiny_data, [32, 16], tc, 2, tmp_path / "b", measure_mem=False)
    assert [r.mape_runs for r in a.rows] == [r.mape_runs for r in b.rows]
    assert (tmp_path / "a/models/lstm-32.tlsb").read_bytes() == (tmp_path / "b/models/lstm-32.tlsb").read_bytes()


@pytest.fixture(scope="module")
def report(tiny_data, tmp_path_factory):
    return run_sweep(tiny_data, [128, 64, 32, 16], TrainConfig(epochs=1), 2,
                     tmp_path_factory.mktemp("sw"), measure_mem=False)


def test_markdown_column_order(report, tmp_path):
    emit_report(report, tmp_path, formats=("markdown",))
    md = (tmp_path / "report.md").read_text()
    assert "| Model | Hidden Units | Params | MAPE (%) | RMSE | Size (KB) |" in md
    assert "Computational resource usage" in md


def test_json_csv_round_trip(report, tmp_path):
    emit_report(report, tmp_path)
    loaded = load_report(tmp_path / "sweep_report.json")
    with (tmp_path / "table1.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    for r, row in zip(loaded.rows, rows):
        assert row["Model"] == r.name
        assert int(row["Params"]) == r.param_count
        assert float(row["MAPE (%)"]) == r.mape
        assert float(row["RMSE"]) == r.rmse
        assert int(row["Size (KB)"]) == r.model_bytes // 1024
    with (tmp_path / "fig_error_vs_size.csv").open() as fh:
        fig = list(csv.DictReader(fh))
    assert list(fig[0]) == benchmark.FIGURE_COLUMNS
    assert [float(f["mape"]) for f in fig] == [r.mape for r in loaded.rows]
    assert loaded.to_dict() == report.to_dict()


def test_emit_is_deterministic(report, tmp_path):
    emit_report(report, tmp_path / "a")
    emit_report(report, tmp_path / "b")
    for name in ("sweep_report.json", "table1.csv", "table3.csv", "report.md"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_empty_report_rejected(tmp_path):
    with pytest.raises(ValueError):
        emit_report(SweepReport([]), tmp_path)
