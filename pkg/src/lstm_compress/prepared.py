"""Prepared-data directories: the split, fitted scaler and windows shared by train/evaluate/sweep.

Layout of a prepared directory::

    series.csv    canonical sales records (date,store,item,sales)
    split.json    train fraction, per-series split indices, window counts, fingerprint
    scaler.json   min/max per channel, fitted on training windows only
    windows.csv   optional debug dump of the normalized windows

Windows are rebuilt from ``series.csv`` on load; the stored scaler must match
the refit one exactly.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dataset
from .dataset import SalesRecord, SeriesKey
from .features import (
    FEATURE_ORDER,
    Scaler,
    WindowSet,
    apply_scaler,
    build_windows,
    dump_windows_csv,
    fit_scaler,
    temporal_split,
)


def _series_csv_bytes(series: dict[SeriesKey, list[SalesRecord]]) -> bytes:
    buf = io.StringIO()
    buf.write(",".join(dataset.HEADER) + "\n")
    for key in sorted(series):
        for r in series[key]:
            buf.write(f"{r.date.isoformat()},{r.store},{r.item},{r.sales}\n")
    return buf.getvalue().encode("utf-8")


def _pool(parts: list[WindowSet]) -> WindowSet:
    pooled = WindowSet.concat(parts)
    if not len(pooled):
        return pooled
    order = sorted(range(len(pooled)), key=lambda i: (pooled.target_dates[i], pooled.keys[i]))
    return pooled.take(order)


@dataclass
class PreparedData:
    series: dict[SeriesKey, list[SalesRecord]]
    train_fraction: float
    train_raw: WindowSet
    test_raw: WindowSet
    scaler: Scaler
    split_index: dict[SeriesKey, int]
    fingerprint: str

    @property
    def train(self) -> WindowSet:
        return apply_scaler(self.scaler, self.train_raw)

    @property
    def test(self) -> WindowSet:
        return apply_scaler(self.scaler, self.test_raw)

    def split_dict(self) -> dict:
        return {
            "train_fraction": self.train_fraction,
            "feature_order": list(FEATURE_ORDER),
            "series": [
                {"key": str(k), "train": [0, self.split_index[k]], "n_windows": len(self.series[k]) - 60}
                for k in sorted(self.series)
            ],
            "n_train": len(self.train_raw),
            "n_test": len(self.test_raw),
            "fingerprint": self.fingerprint,
        }


def prepare(series: dict[SeriesKey, list[SalesRecord]], train_fraction: float = 0.8) -> PreparedData:
    """Build windows per series, split each series 80/20 in time, pool, fit the scaler on train."""
    if not series:
        raise ValueError("no series to prepare")
    trains, tests, split_index = [], [], {}
    for key in sorted(series):
        w = build_windows(series[key])
        plan = temporal_split(len(w), train_fraction)
        split_index[key] = plan.train[1]
        trains.append(w.take(slice(*plan.train)))
        tests.append(w.take(slice(*plan.test)))
    train_raw, test_raw = _pool(trains), _pool(tests)
    scaler = fit_scaler(train_raw)
    h = hashlib.sha256(_series_csv_bytes(series))
    h.update(repr(float(train_fraction)).encode())
    return PreparedData(series, train_fraction, train_raw, test_raw, scaler, split_index, h.hexdigest())


def write_prepared(out_dir: str | Path, data: PreparedData, dump_windows: bool = True) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "series.csv").write_bytes(_series_csv_bytes(data.series))
    (out / "split.json").write_text(json.dumps(data.split_dict(), indent=2, sort_keys=True) + "\n")
    (out / "scaler.json").write_text(json.dumps(data.scaler.to_dict(), indent=2, sort_keys=True) + "\n")
    if dump_windows:
        both = WindowSet.concat([data.train, data.test])
        dump_windows_csv(out / "windows.csv", both)
    return out


def load_prepared(path: str | Path) -> PreparedData:
    path = Path(path)
    for name in ("series.csv", "split.json", "scaler.json"):
        if not (path / name).exists():
            raise FileNotFoundError(f"prepared directory {path} is missing {name}")
    split = json.loads((path / "split.json").read_text())
    if split.get("feature_order") != list(FEATURE_ORDER):
        raise ValueError(f"{path}: feature order {split.get('feature_order')} does not match {FEATURE_ORDER}")
    series = dataset.load_csv(path / "series.csv")
    data = prepare(series, split["train_fraction"])
    stored = Scaler.from_dict(json.loads((path / "scaler.json").read_text()))
    if stored != data.scaler:
        raise ValueError(f"{path}: stored scaler does not match the one refit from series.csv")
    if split.get("fingerprint") != data.fingerprint:
        raise ValueError(f"{path}: data fingerprint mismatch")
    return data


def naive_forecasts(data: PreparedData, windows: WindowSet, lag: int = 1) -> np.ndarray:
    """Naive forecast in sales units: the series value ``lag`` days before each target date."""
    lookup = {
        key: {r.date: r.sales for r in recs} for key, recs in data.series.items()
    }
    return np.array(
        [lookup[k][d - dt.timedelta(days=lag)] for k, d in zip(windows.keys, windows.target_dates)],
        dtype=np.float64,
    )
