"""Acceptance criteria, one test each.

Every test prints a single ``ACCEPTANCE <n> PASS|FAIL|SKIP`` line (visible even
under pytest capture) before asserting. Run just this suite with::

    pytest tests/test_acceptance.py -v

or as a script, which prints the nine lines and exits non-zero on any failure::

    python3 tests/test_acceptance.py
"""

import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "scripts"))

import naive_baseline  # noqa: E402
from lstm_compress import benchmark, dataset, nn_core  # noqa: E402
from lstm_compress.cli import main  # noqa: E402
from lstm_compress.dataset import SalesRecord  # noqa: E402
from lstm_compress.evaluation import paired_ttest, student_t_sf2  # noqa: E402
from lstm_compress.features import Scaler, read_windows_csv  # noqa: E402
from lstm_compress.nn_core import ModelConfig  # noqa: E402
from lstm_compress.prepared import load_prepared, prepare  # noqa: E402
from lstm_compress.training import load_model, save_model  # noqa: E402

KAGGLE_ENV = "LSTM_COMPRESS_KAGGLE_CSV"


def verdict(n, title, ok, detail="", capsys=None, status=None):
    status = status or ("PASS" if ok else "FAIL")
    line = f"ACCEPTANCE {n} {status}: {title}" + (f" [{detail}]" if detail else "")
    if capsys is not None:
        with capsys.disabled():
            print("\n" + line)
    else:
        print(line)
    return ok


def test_1_size_arithmetic(capsys):
    count32 = benchmark.param_count(ModelConfig(hidden_units=32))
    kb = {h: benchmark.model_size(c).kb_display for h, c in benchmark.PUBLISHED_PARAM_COUNTS.items()}
    expected_kb = {128: 280, 64: 76, 48: 45, 32: 22, 16: 7}
    b64 = benchmark.model_size(benchmark.PUBLISHED_PARAM_COUNTS[64]).bytes
    b128 = benchmark.model_size(benchmark.PUBLISHED_PARAM_COUNTS[128]).bytes
    red = round(benchmark.size_reduction_percent(b64, b128))
    ok = count32 == 5665 and kb == expected_kb and red == 73
    verdict(1, "parameter/size arithmetic", ok, f"h32={count32} kb={kb} reduction64={red}%", capsys)
    assert count32 == 5665
    assert kb == expected_kb
    assert red == 73


def test_2_gradient_check(capsys):
    start = time.perf_counter()
    cfg = ModelConfig(hidden_units=4, seq_len=5)
    reports = [nn_core.grad_check(cfg, seed=s, tolerance=1e-4) for s in range(10)]
    elapsed = time.perf_counter() - start
    worst = max(r.max_error for r in reports)
    n_blocks = {len(r.block_errors) for r in reports}
    ok = all(r.passed for r in reports) and n_blocks == {len(nn_core.TENSOR_ORDER)} and elapsed < 30
    verdict(2, "gradient check h=4 seq=5, 10 seeds", ok, f"max rel err {worst:.2e}, {elapsed:.1f}s", capsys)
    assert worst < 1e-4
    assert n_blocks == {len(nn_core.TENSOR_ORDER)}
    assert elapsed < 30


def test_3_learning_sanity(tmp_path, capsys):
    start = time.perf_counter()
    prep = tmp_path / "prep"
    # noiseless defaults: 800 days, base 50, weekly amplitude 10
    assert main(["prepare", "--synthetic", "--noise-std", "0", "--out", str(prep)]) == 0
    model = tmp_path / "lstm16.tlsb"
    assert main(["train", "--data", str(prep), "--hidden", "16", "--out", str(model)]) == 0
    assert main(["evaluate", "--model", str(model), "--data", str(prep), "--out", str(tmp_path / "ev")]) == 0
    lstm = json.loads((tmp_path / "ev" / "eval.json").read_text())["mape_percent"]
    seasonal = naive_baseline.naive_mape(prep, lag=7)
    elapsed = time.perf_counter() - start
    ok = lstm < seasonal and elapsed < 300
    verdict(3, "LSTM-16 beats seasonal naive on noiseless synthetic data", ok,
            f"LSTM-16 {lstm:.3f}% vs seasonal-naive {seasonal:.3f}%, {elapsed:.1f}s", capsys)
    assert elapsed < 300
    assert lstm < seasonal


def test_4_kaggle_sweep(tmp_path, capsys):
    path = os.environ.get(KAGGLE_ENV)
    if not path or not Path(path).exists():
        verdict(4, "Kaggle sweep", True, f"set {KAGGLE_ENV} to the train.csv path to run", capsys, "SKIP")
        pytest.skip(f"{KAGGLE_ENV} not set")
    start = time.perf_counter()
    data = prepare(dataset.load_csv(path))
    report = benchmark.run_sweep(data, benchmark.VALID_HIDDEN, None, 5, tmp_path / "sweep", measure_mem=False)
    benchmark.emit_report(report, tmp_path / "sweep")
    wall = time.perf_counter() - start
    beats = report.flags["beats_naive"]
    ok = len(report.rows) == 5 and all(beats.values()) and "u_shape_replicates" in report.flags
    verdict(4, "Kaggle sweep beats naive last value", ok,
            f"beats={beats} u_shape={report.flags.get('u_shape_replicates')} wall={wall:.0f}s", capsys)
    assert ok


def test_5_statistics_oracle(capsys):
    d = [1.0, 2.0, 3.0, 4.0, 5.0]
    res = paired_ttest(d, [0.0] * 5)
    oracle = stats.ttest_1samp(d, 0.0)
    p216 = student_t_sf2(2.16, 4)
    p123 = student_t_sf2(1.23, 4)
    ok = (
        abs(res.t_statistic - 4.2426) <= 1e-4 and abs(res.p_value - 0.0132) <= 1e-4 and res.df == 4
        and math.isclose(res.t_statistic, oracle.statistic, rel_tol=1e-12)
        and math.isclose(res.p_value, oracle.pvalue, rel_tol=1e-10)
        and 0.096 <= p216 <= 0.097 and 0.286 <= p123 <= 0.287
    )
    verdict(5, "paired t-test oracle", ok,
            f"t={res.t_statistic:.4f} p={res.p_value:.4f}; t=2.16 -> p={p216:.4f}; t=1.23 -> p={p123:.4f}", capsys)
    assert res.t_statistic == pytest.approx(4.2426, abs=1e-4)
    assert res.p_value == pytest.approx(0.0132, abs=1e-4)
    assert res.df == 4
    assert res.t_statistic == pytest.approx(oracle.statistic, rel=1e-12)
    assert res.p_value == pytest.approx(oracle.pvalue, rel=1e-10)
    assert 0.096 <= p216 <= 0.097
    assert 0.286 <= p123 <= 0.287


ACCURACY_COLUMNS = ("hidden_units", "param_count", "model_bytes", "mape", "rmse", "mape_runs", "rmse_runs")


def test_6_determinism(tmp_path, capsys):
    prep = tmp_path / "prep"
    assert main(["prepare", "--synthetic", "--n-days", "200", "--noise-std", "2", "--out", str(prep)]) == 0
    files = []
    for run in ("a", "b"):
        out = tmp_path / f"{run}.tlsb"
        assert main(["train", "--data", str(prep), "--hidden", "16", "--epochs", "3", "--seed", "5",
                     "--out", str(out)]) == 0
        files.append(out.read_bytes())
    same_model = files[0] == files[1]

    columns = []
    for run in ("a", "b"):
        out = tmp_path / f"sweep-{run}"
        assert main(["sweep", "--data", str(prep), "--variants", "16,32", "--reps", "2", "--epochs", "2",
                     "--no-memory", "--out", str(out)]) == 0
        rep = json.loads((out / "sweep_report.json").read_text())
        columns.append([{c: row[c] for c in ACCURACY_COLUMNS} for row in rep["rows"]])
    same_sweep = columns[0] == columns[1]
    verdict(6, "determinism of train and sweep", same_model and same_sweep,
            f"model bytes equal={same_model}, sweep accuracy equal={same_sweep}", capsys)
    assert same_model
    assert same_sweep


def test_7_persistence_fidelity(tmp_path, capsys):
    cfg = ModelConfig(hidden_units=32)
    w = nn_core.init_weights(cfg, seed=11)
    rng = np.random.default_rng(12)
    # move away from the initial point so every tensor carries arbitrary values
    w = nn_core.ModelWeights({k: v + rng.normal(0, 0.05, v.shape) for k, v in w.tensors.items()})
    windows = rng.uniform(-0.2, 1.2, size=(1000, 30, 7))
    save_model(tmp_path / "m.tlsb", w, cfg)
    loaded = load_model(tmp_path / "m.tlsb")
    expected = nn_core.predict(cfg, w.as_float32(), windows)
    got = nn_core.predict(loaded.config, loaded.weights, windows)
    ok = np.array_equal(expected, got)
    verdict(7, "save/load/predict fidelity on 1000 windows", ok,
            f"max |diff| {np.max(np.abs(expected - got)):.1e}", capsys)
    assert ok


def test_8_latency_relation(tmp_path, capsys):
    prep = tmp_path / "prep"
    assert main(["prepare", "--synthetic", "--n-days", "150", "--out", str(prep)]) == 0
    out = tmp_path / "sweep"
    assert main(["sweep", "--data", str(prep), "--reps", "1", "--epochs", "1", "--no-memory",
                 "--latency-reps", "300", "--out", str(out)]) == 0
    rep = json.loads((out / "sweep_report.json").read_text())
    meds = {r["hidden_units"]: r["latency_median_ms"] for r in rep["rows"]}
    flags = rep["flags"]
    ratio = meds[16] / meds[128]
    spread = max(meds.values()) / min(meds.values())
    flag_consistent = (
        flags["overhead_dominated"] == (spread <= 1.5)
        and flags["latency_h16_within_tolerance"] == (ratio <= benchmark.LATENCY_TOLERANCE)
    )
    ok = len(meds) == 5 and flag_consistent and (ratio <= 1.05 or flags["overhead_dominated"])
    detail = ", ".join(f"h{h}={m:.3f}ms" for h, m in sorted(meds.items()))
    verdict(8, "latency relation h16 vs h128", ok,
            f"{detail}; ratio {ratio:.3f}; overhead_dominated={flags['overhead_dominated']}", capsys)
    assert len(meds) == 5
    assert flag_consistent
    assert ratio <= 1.05 or flags["overhead_dominated"]


def _plain_features(history, dates, day):
    return [
        float(history[day - 1]),
        float(history[day - 7]),
        float(history[day - 30]),
        sum(history[day - 6 : day + 1]) / 7.0,
        sum(history[day - 29 : day + 1]) / 30.0,
        dates[day].weekday() / 6.0,
        (dates[day].month - 1) / 11.0,
    ]


def test_9_leakage_audit(tmp_path, capsys):
    prep = tmp_path / "prep"
    assert main(["prepare", "--synthetic", "--n-days", "400", "--n-stores", "2", "--noise-std", "4",
                 "--out", str(prep)]) == 0
    stored = read_windows_csv(prep / "windows.csv")
    scaler = Scaler.from_dict(json.loads((prep / "scaler.json").read_text()))
    n_train = json.loads((prep / "split.json").read_text())["n_train"]
    data = load_prepared(prep)
    rng = np.random.default_rng(2024)
    mismatches = 0
    for i in rng.choice(n_train, size=100, replace=False):
        recs = data.series[stored.keys[i]]
        dates = [r.date for r in recs]
        j = dates.index(stored.target_dates[i])
        history = [r.sales for r in recs[:j]]  # strictly before the target day
        raw = np.array([_plain_features(history, dates, j - 30 + t) for t in range(30)])
        if not np.array_equal(scaler.transform_inputs(raw), stored.inputs[i]):
            mismatches += 1

    perturbed = {}
    for key, recs in data.series.items():
        first_test = 60 + data.split_index[key]
        perturbed[key] = [
            SalesRecord(r.date, r.store, r.item, r.sales * 3 + 500) if k >= first_test else r
            for k, r in enumerate(recs)
        ]
    other = prepare(perturbed)
    scaler_same = other.scaler == data.scaler and not np.array_equal(other.test_raw.targets, data.test_raw.targets)
    ok = mismatches == 0 and scaler_same
    verdict(9, "leakage audit", ok, f"feature mismatches {mismatches}/100, scaler unchanged={scaler_same}", capsys)
    assert mismatches == 0
    assert scaler_same


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
