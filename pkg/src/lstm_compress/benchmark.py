"""Efficiency measurement and the hidden-unit compression sweep.

Sizes follow ``params x 4 bytes`` (float32 storage). Latency is timed on a
freshly loaded model file, one window per call, after untimed warm-up calls.
Peak memory is the max RSS of a child process running the same workload; it
measures this implementation's process, not any particular framework.
"""

from __future__ import annotations

import csv
import json
import math
import os
import platform
import subprocess
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, nn_core
from .evaluation import TTestResult, evaluate, mape, paired_ttest
from .nn_core import ModelConfig, VALID_HIDDEN
from .prepared import PreparedData, naive_forecasts
from .training import TrainConfig, build_header, load_model, save_model, train

BASELINE_HIDDEN = 128
# parameter counts printed in the published results table, keyed by hidden units
PUBLISHED_PARAM_COUNTS = {128: 71_809, 64: 19_521, 48: 11_569, 32: 5_665, 16: 1_857}
TTEST_PAIRS = ((64, 128), (64, 32), (64, 16))
LATENCY_TOLERANCE = 1.05


def param_count(config: ModelConfig) -> int:
    h, n, d, o = config.hidden_units, config.input_dim, config.dense_units, config.output_dim
    return 4 * (h * (h + n) + h) + (d * h + d) + (o * d + o)


@dataclass(frozen=True)
class ModelSize:
    bytes: int
    kb: float

    @property
    def kb_display(self) -> int:
        # table sizes are whole KB, truncated
        return int(self.bytes // 1024)


def model_size(count: int) -> ModelSize:
    if count < 0:
        raise ValueError(f"parameter count must be >= 0, got {count}")
    b = count * 4
    return ModelSize(b, round(b / 1024, 1))


def size_reduction_percent(model_bytes: int, baseline_bytes: int) -> float:
    return 100.0 * (1.0 - model_bytes / baseline_bytes)


@dataclass
class LatencyStats:
    median_ms: float
    p5_ms: float
    p95_ms: float
    mean_ms: float
    reps: int
    warmup: int


def measure_latency(model_file: str | Path, window: np.ndarray, warmup: int = 10, reps: int = 100) -> LatencyStats:
    """Time single-window inference on a freshly loaded model."""
    if reps < 100:
        raise ValueError(f"reps must be >= 100, got {reps}")
    if warmup < 10:
        raise ValueError(f"warmup must be >= 10, got {warmup}")
    model = load_model(model_file)
    x = np.asarray(window, dtype=np.float64)
    if x.shape != (model.config.seq_len, model.config.input_dim):
        raise ValueError(f"latency needs one window of shape {(model.config.seq_len, model.config.input_dim)}")
    for _ in range(warmup):
        nn_core.forward(model.config, model.weights, x)
    samples = np.empty(reps)
    for k in range(reps):
        t0 = time.perf_counter_ns()
        y, _ = nn_core.forward(model.config, model.weights, x)
        samples[k] = (time.perf_counter_ns() - t0) / 1e6
        if not math.isfinite(y):
            raise nn_core.NumericalError("non-finite prediction during latency measurement")
    return LatencyStats(
        float(np.median(samples)),
        float(np.percentile(samples, 5)),
        float(np.percentile(samples, 95)),
        float(np.mean(samples)),
        reps,
        warmup,
    )


_MEMPROBE = """
import sys, numpy as np
from lstm_compress.benchmark import measure_latency
from lstm_compress.training import load_model
m = load_model(sys.argv[1])
w = np.random.default_rng(0).random((m.config.seq_len, m.config.input_dim))
measure_latency(sys.argv[1], w, warmup=10, reps=int(sys.argv[2]))
"""


def measure_memory(model_file: str | Path, reps: int = 100) -> float | None:
    """Peak RSS in MB of a child process running the latency workload; None if unavailable."""
    if not hasattr(os, "wait4"):
        return None
    try:
        proc = subprocess.Popen([sys.executable, "-c", _MEMPROBE, str(model_file), str(reps)],
                                stdout=subprocess.DEVNULL, stderr=subprocess.PIPE)
        _, status, usage = os.wait4(proc.pid, 0)
        proc.returncode = os.waitstatus_to_exitcode(status)
    except OSError:
        return None
    if proc.returncode != 0:
        return None
    # ru_maxrss is KiB on Linux, bytes on macOS
    scale = 1.0 if sys.platform == "darwin" else 1024.0
    return usage.ru_maxrss * scale / 2**20


def host_description() -> dict:
    return {
        "platform": platform.platform(),
        "machine": platform.machine(),
        "processor": platform.processor(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "cpu_count": os.cpu_count(),
    }


@dataclass
class VariantRow:
    hidden_units: int
    param_count: int
    model_bytes: int
    size_kb: float
    size_reduction_percent: float
    mape: float
    rmse: float
    mape_runs: list[float]
    rmse_runs: list[float]
    latency_median_ms: float | None = None
    latency_p5_ms: float | None = None
    latency_p95_ms: float | None = None
    latency_mean_ms: float | None = None
    peak_rss_mb: float | None = None
    published_param_count: int | None = None
    train_seconds: float = 0.0

    @property
    def name(self) -> str:
        return f"LSTM-{self.hidden_units}"

    @property
    def size_kb_display(self) -> int:
        return self.model_bytes // 1024


@dataclass
class SweepReport:
    rows: list[VariantRow]
    ttests: dict[str, TTestResult] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    flags: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def row(self, hidden: int) -> VariantRow:
        for r in self.rows:
            if r.hidden_units == hidden:
                return r
        raise KeyError(hidden)

    def to_dict(self) -> dict:
        return {
            "rows": [asdict(r) for r in self.rows],
            "ttests": {k: v.to_dict() for k, v in self.ttests.items()},
            "notes": list(self.notes),
            "flags": dict(self.flags),
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepReport":
        return cls(
            [VariantRow(**r) for r in d["rows"]],
            {k: TTestResult.from_dict(v) for k, v in d.get("ttests", {}).items()},
            list(d.get("notes", [])),
            dict(d.get("flags", {})),
            dict(d.get("metadata", {})),
        )


def _train_one(args):
    hidden, seed, train_config, data, model_path = args
    cfg = ModelConfig(hidden_units=hidden)
    tc = TrainConfig(**{**asdict(train_config), "seed": seed})
    run = train(cfg, tc, data.train)
    ev = evaluate(cfg, run.weights, data.test, data.scaler)
    if model_path is not None:
        header = build_header(cfg, data.scaler, seed, data.fingerprint, tc)
        save_model(model_path, run.weights, cfg, header)
    return hidden, seed, ev.mape_percent, ev.rmse, run.wall_seconds


def run_sweep(data: PreparedData, variants=VALID_HIDDEN, train_config: TrainConfig | None = None,
              repetitions: int = 5, out_dir: str | Path = "sweep", latency_reps: int = 100,
              latency_warmup: int = 10, measure_mem: bool = True, jobs: int = 1) -> SweepReport:
    """Train every variant ``repetitions`` times, evaluate, then benchmark.

    Repetition ``r`` of every variant uses seed ``base_seed + r``, so runs pair
    by seed index across variants. Efficiency is measured on the repetition-0
    model file after all training has finished.
    """
    variants = sorted(set(int(v) for v in variants), reverse=True)
    if not variants:
        raise ValueError("no variants requested")
    if repetitions < 1:
        raise ValueError(f"repetitions must be >= 1, got {repetitions}")
    train_config = train_config or TrainConfig()
    out = Path(out_dir)
    (out / "models").mkdir(parents=True, exist_ok=True)
    base_seed = train_config.seed

    tasks = [
        (h, base_seed + r, train_config, data, out / "models" / f"lstm-{h}.tlsb" if r == 0 else None)
        for h in variants
        for r in range(repetitions)
    ]
    results: dict[int, list] = {h: [] for h in variants}
    report = SweepReport([], metadata=_metadata(data, train_config, variants, repetitions))
    try:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                for res in pool.map(_train_one, tasks):
                    results[res[0]].append(res)
        else:
            for t in tasks:
                res = _train_one(t)
                results[res[0]].append(res)
    except Exception as exc:
        report.notes.append(f"sweep aborted: {type(exc).__name__}: {exc}")
        report.rows = [_accuracy_row(h, results[h]) for h in variants if len(results[h]) == repetitions]
        _write_json(out / "sweep_report.partial.json", report.to_dict())
        raise

    baseline_bytes = model_size(param_count(ModelConfig(hidden_units=BASELINE_HIDDEN))).bytes
    window = data.test.inputs[0]
    for h in variants:
        row = _accuracy_row(h, results[h])
        row.size_reduction_percent = size_reduction_percent(row.model_bytes, baseline_bytes)
        path = out / "models" / f"lstm-{h}.tlsb"
        lat = measure_latency(path, window, warmup=latency_warmup, reps=latency_reps)
        row.latency_median_ms, row.latency_p5_ms = lat.median_ms, lat.p5_ms
        row.latency_p95_ms, row.latency_mean_ms = lat.p95_ms, lat.mean_ms
        row.peak_rss_mb = measure_memory(path, latency_reps) if measure_mem else None
        report.rows.append(row)

    _add_ttests(report, variants, repetitions)
    _add_flags(report, data)
    return report


def _metadata(data: PreparedData, tc: TrainConfig, variants, reps) -> dict:
    return {
        "tool_version": __version__,
        "variants": list(variants),
        "repetitions": reps,
        "base_seed": tc.seed,
        "seeds": [tc.seed + r for r in range(reps)],
        "train_config": asdict(tc),
        "data_fingerprint": data.fingerprint,
        "n_series": len(data.series),
        "n_train_windows": len(data.train_raw),
        "n_test_windows": len(data.test_raw),
        "mape_zero_policy": "exclude",
        "host": host_description(),
    }


def _accuracy_row(h: int, res: list) -> VariantRow:
    res = sorted(res, key=lambda r: r[1])
    count = param_count(ModelConfig(hidden_units=h))
    size = model_size(count)
    mapes = [r[2] for r in res]
    rmses = [r[3] for r in res]
    return VariantRow(
        hidden_units=h,
        param_count=count,
        model_bytes=size.bytes,
        size_kb=size.kb,
        size_reduction_percent=0.0,
        mape=float(np.mean(mapes)),
        rmse=float(np.mean(rmses)),
        mape_runs=mapes,
        rmse_runs=rmses,
        published_param_count=PUBLISHED_PARAM_COUNTS.get(h),
        train_seconds=float(sum(r[4] for r in res)),
    )


def _add_ttests(report: SweepReport, variants, repetitions: int) -> None:
    if repetitions < 2:
        report.notes.append("t-tests omitted: insufficient repetitions (need >= 2 paired runs)")
        return
    for a, b in TTEST_PAIRS:
        if a in variants and b in variants:
            # positive t means LSTM-a has the lower MAPE
            report.ttests[f"{a}_vs_{b}"] = paired_ttest(report.row(b).mape_runs, report.row(a).mape_runs)


def _add_flags(report: SweepReport, data: PreparedData) -> None:
    test = data.test
    actual = data.scaler.invert_target(test.targets)
    naive = mape(actual, naive_forecasts(data, test, 1))
    seasonal = mape(actual, naive_forecasts(data, test, 7))
    hs = {r.hidden_units for r in report.rows}
    flags = report.flags
    flags["naive_last_value_mape"] = naive
    flags["seasonal_naive_mape"] = seasonal
    flags["beats_naive"] = {str(r.hidden_units): r.mape < naive for r in report.rows}
    if {64, 128} <= hs:
        flags["u_shape_replicates"] = report.row(128).mape > report.row(64).mape
    meds = [r.latency_median_ms for r in report.rows if r.latency_median_ms is not None]
    if meds:
        flags["latency_spread_ratio"] = max(meds) / min(meds)
        flags["overhead_dominated"] = max(meds) / min(meds) <= 1.5
    if {16, 128} <= hs:
        ratio = report.row(16).latency_median_ms / report.row(128).latency_median_ms
        flags["latency_ratio_16_vs_128"] = ratio
        flags["latency_h16_within_tolerance"] = ratio <= LATENCY_TOLERANCE
    deltas = {
        str(r.hidden_units): r.published_param_count - r.param_count
        for r in report.rows
        if r.published_param_count is not None and r.published_param_count != r.param_count
    }
    if deltas:
        flags["published_param_count_deltas"] = deltas
        report.notes.append(
            "published parameter counts differ from the closed form for hidden="
            + ", ".join(f"{h} (+{d})" for h, d in deltas.items())
            + "; closed-form counts are reported"
        )
    report.notes.append("memory is peak RSS of this implementation's inference process, not framework memory")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _fmt(v, spec=".2f"):
    return "" if v is None else format(v, spec)


TABLE1_COLUMNS = ["Model", "Hidden Units", "Params", "MAPE (%)", "RMSE", "Size (KB)"]
TABLE3_COLUMNS = ["Model", "Inference Time (ms)", "Memory Usage (MB)", "Size Reduction (%)"]
FIGURE_COLUMNS = ["hidden_units", "param_count", "size_kb", "mape", "rmse", "latency_ms"]


def _table1(report):
    return [[r.name, r.hidden_units, r.param_count, repr(r.mape), repr(r.rmse), r.size_kb_display] for r in report.rows]


def _table3(report):
    out = []
    for r in report.rows:
        red = "-" if r.hidden_units == BASELINE_HIDDEN else repr(r.size_reduction_percent)
        mem = "unavailable" if r.peak_rss_mb is None else repr(r.peak_rss_mb)
        out.append([r.name, repr(r.latency_median_ms), mem, red])
    return out


def _figure(report, extra=False):
    base = None
    if any(r.hidden_units == BASELINE_HIDDEN for r in report.rows):
        base = report.row(BASELINE_HIDDEN).mape
    rows = []
    for r in report.rows:
        row = [r.hidden_units, r.param_count, repr(r.size_kb), repr(r.mape), repr(r.rmse), repr(r.latency_median_ms)]
        if extra:
            rel = "" if base is None else repr(100.0 * (base - r.mape) / base)
            mem = "" if r.peak_rss_mb is None else repr(r.peak_rss_mb)
            row += [repr(r.size_reduction_percent), rel, mem]
        rows.append(row)
    return rows


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _markdown_table(header, rows) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(str(c) for c in row) + " |" for row in rows]
    return "\n".join(lines)


def render_markdown(report: SweepReport) -> str:
    t1 = [[r.name, r.hidden_units, f"{r.param_count:,}", _fmt(r.mape), _fmt(r.rmse), r.size_kb_display] for r in report.rows]
    t3 = [
        [r.name, _fmt(r.latency_median_ms, ".3f"),
         "unavailable" if r.peak_rss_mb is None else _fmt(r.peak_rss_mb, ".1f"),
         "-" if r.hidden_units == BASELINE_HIDDEN else f"{r.size_reduction_percent:.0f}%"]
        for r in report.rows
    ]
    parts = ["# Compression sweep", "", "## Performance at different sizes", "",
             _markdown_table(TABLE1_COLUMNS, t1), ""]
    hs = {r.hidden_units for r in report.rows}
    if {64, 128} <= hs:
        b, o = report.row(128), report.row(64)
        parts += ["## Comparison with baseline", "",
                  _markdown_table(["Method", "MAPE (%)", "Parameters", "Size (KB)"], [
                      [f"{b.name} (baseline)", _fmt(b.mape), f"{b.param_count:,}", b.size_kb_display],
                      [o.name, _fmt(o.mape), f"{o.param_count:,}", o.size_kb_display]]), ""]
    parts += ["## Computational resource usage", "", _markdown_table(TABLE3_COLUMNS, t3), ""]
    if report.ttests:
        parts += ["## Paired t-tests (positive t: first model has lower MAPE)", ""]
        parts += [f"- LSTM-{k.replace('_vs_', ' vs LSTM-')}: t = {v.t_statistic:.3f}, p = {v.p_value:.4f}, df = {v.df}"
                  for k, v in report.ttests.items()]
        parts.append("")
    if report.flags:
        parts += ["## Flags", ""] + [f"- {k}: {v}" for k, v in sorted(report.flags.items())] + [""]
    if report.notes:
        parts += ["## Notes", ""] + [f"- {n}" for n in report.notes] + [""]
    return "\n".join(parts)


def emit_report(report: SweepReport, out_dir: str | Path, formats=("json", "csv", "markdown")) -> list[Path]:
    """Write report artifacts; returns the paths written."""
    if not report.rows:
        raise ValueError("report has no variant rows")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "json" in formats:
        _write_json(out / "sweep_report.json", report.to_dict())
        written.append(out / "sweep_report.json")
    if "csv" in formats:
        _write_csv(out / "table1.csv", TABLE1_COLUMNS, _table1(report))
        _write_csv(out / "table3.csv", TABLE3_COLUMNS, _table3(report))
        _write_csv(out / "fig_error_vs_size.csv", FIGURE_COLUMNS, _figure(report))
        _write_csv(out / "fig_tradeoff.csv",
                   FIGURE_COLUMNS + ["size_reduction_percent", "relative_accuracy_percent", "peak_rss_mb"],
                   _figure(report, extra=True))
        written += [out / n for n in ("table1.csv", "table3.csv", "fig_error_vs_size.csv", "fig_tradeoff.csv")]
    if "markdown" in formats:
        (out / "report.md").write_text(render_markdown(report), encoding="utf-8")
        written.append(out / "report.md")
    return written


def load_report(path: str | Path) -> SweepReport:
    return SweepReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
