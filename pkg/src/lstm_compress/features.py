"""Feature windows, min-max scaling and temporal splitting.

Each day ``d`` of a series gets a 7-vector in the fixed order of
``FEATURE_ORDER``: lags of 1, 7 and 30 days, trailing 7- and 30-day means
(including day ``d``), and ordinal day-of-week / month scaled to [0, 1].
A window for target day ``j`` stacks the vectors of days ``j-30 .. j-1``
(oldest first) and its target is the sales value on day ``j``.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .dataset import SalesRecord, SeriesKey

FEATURE_ORDER = (
    "lag_1",
    "lag_7",
    "lag_30",
    "rollmean_7",
    "rollmean_30",
    "day_of_week",
    "month",
)
N_FEATURES = len(FEATURE_ORDER)
SEQ_LEN = 30
WARMUP = 30
MIN_SERIES_LEN = WARMUP + SEQ_LEN + 1


class FeatureError(ValueError):
    pass


@dataclass
class FeatureWindow:
    inputs: np.ndarray  # (SEQ_LEN, N_FEATURES)
    target: float
    target_date: dt.date
    key: SeriesKey


@dataclass
class WindowSet:
    """A batch of windows stored as stacked arrays.

    ``inputs`` has shape (N, SEQ_LEN, N_FEATURES); ``targets`` has shape (N,).
    """

    inputs: np.ndarray
    targets: np.ndarray
    target_dates: list[dt.date]
    keys: list[SeriesKey]

    def __len__(self) -> int:
        return len(self.targets)

    def __getitem__(self, i: int) -> FeatureWindow:
        return FeatureWindow(self.inputs[i], float(self.targets[i]), self.target_dates[i], self.keys[i])

    def take(self, idx) -> "WindowSet":
        if isinstance(idx, slice):
            return WindowSet(self.inputs[idx], self.targets[idx], self.target_dates[idx], self.keys[idx])
        idx = np.asarray(idx, dtype=np.intp)
        return WindowSet(
            self.inputs[idx],
            self.targets[idx],
            [self.target_dates[i] for i in idx],
            [self.keys[i] for i in idx],
        )

    @staticmethod
    def concat(parts: Sequence["WindowSet"]) -> "WindowSet":
        parts = [p for p in parts if len(p)]
        if not parts:
            return WindowSet(np.zeros((0, SEQ_LEN, N_FEATURES)), np.zeros(0), [], [])
        return WindowSet(
            np.concatenate([p.inputs for p in parts]),
            np.concatenate([p.targets for p in parts]),
            [d for p in parts for d in p.target_dates],
            [k for p in parts for k in p.keys],
        )


def daily_features(values: np.ndarray, dates: Sequence[dt.date]) -> np.ndarray:
    """Raw (unscaled) feature matrix, one row per day; rows before day 30 are NaN."""
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    feats = np.full((n, N_FEATURES), np.nan)
    if n <= WARMUP:
        return feats
    # sales are integers, so cumulative sums and window sums are exact
    csum = np.concatenate([[0.0], np.cumsum(values)])
    d = np.arange(WARMUP, n)
    feats[d, 0] = values[d - 1]
    feats[d, 1] = values[d - 7]
    feats[d, 2] = values[d - 30]
    feats[d, 3] = (csum[d + 1] - csum[d - 6]) / 7.0
    feats[d, 4] = (csum[d + 1] - csum[d - 29]) / 30.0
    feats[:, 5] = [day.weekday() / 6.0 for day in dates]
    feats[:, 6] = [(day.month - 1) / 11.0 for day in dates]
    feats[:WARMUP] = np.nan
    return feats


def build_windows(series: Sequence[SalesRecord]) -> WindowSet:
    """All windows of one series, in increasing target-date order."""
    n = len(series)
    if n < MIN_SERIES_LEN:
        raise FeatureError(f"series too short: {n} days, need at least {MIN_SERIES_LEN}")
    values = np.array([r.sales for r in series], dtype=np.float64)
    dates = [r.date for r in series]
    feats = daily_features(values, dates)
    # windows over days WARMUP .. n-2; window w covers days WARMUP+w .. WARMUP+w+SEQ_LEN-1
    body = feats[WARMUP : n - 1]
    inputs = sliding_window_view(body, SEQ_LEN, axis=0).transpose(0, 2, 1).copy()
    targets = values[WARMUP + SEQ_LEN :].copy()
    key = series[0].key
    tdates = dates[WARMUP + SEQ_LEN :]
    assert len(inputs) == len(targets) == n - (WARMUP + SEQ_LEN)
    return WindowSet(inputs, targets, list(tdates), [key] * len(targets))


@dataclass
class Scaler:
    """Per-channel min/max: 7 input channels followed by the target channel."""

    mins: np.ndarray
    maxs: np.ndarray

    @property
    def spans(self) -> np.ndarray:
        return self.maxs - self.mins

    def _scale(self, x, lo, span):
        safe = np.where(span > 0, span, 1.0)
        return np.where(span > 0, (x - lo) / safe, 0.0)

    def transform_inputs(self, x: np.ndarray) -> np.ndarray:
        return self._scale(x, self.mins[:N_FEATURES], self.spans[:N_FEATURES])

    def transform_target(self, y):
        return self._scale(np.asarray(y, dtype=np.float64), self.mins[-1], self.spans[-1])

    def invert_inputs(self, z: np.ndarray) -> np.ndarray:
        return z * self.spans[:N_FEATURES] + self.mins[:N_FEATURES]

    def invert_target(self, z):
        return np.asarray(z, dtype=np.float64) * self.spans[-1] + self.mins[-1]

    def to_dict(self) -> dict:
        return {
            "channels": list(FEATURE_ORDER) + ["target"],
            "min": [float(v) for v in self.mins],
            "max": [float(v) for v in self.maxs],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        if list(d["channels"]) != list(FEATURE_ORDER) + ["target"]:
            raise FeatureError(f"scaler channel order {d['channels']} does not match {FEATURE_ORDER}")
        return cls(np.array(d["min"], dtype=np.float64), np.array(d["max"], dtype=np.float64))

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Scaler)
            and np.array_equal(self.mins, other.mins)
            and np.array_equal(self.maxs, other.maxs)
        )


def fit_scaler(train: WindowSet) -> Scaler:
    if len(train) == 0:
        raise FeatureError("cannot fit scaler on empty training windows")
    rows = train.inputs.reshape(-1, N_FEATURES)
    mins = np.append(rows.min(axis=0), train.targets.min())
    maxs = np.append(rows.max(axis=0), train.targets.max())
    return Scaler(mins, maxs)


def apply_scaler(s: Scaler, windows: WindowSet) -> WindowSet:
    return WindowSet(
        s.transform_inputs(windows.inputs),
        s.transform_target(windows.targets),
        windows.target_dates,
        windows.keys,
    )


def invert_scaler(s: Scaler, windows: WindowSet) -> WindowSet:
    return WindowSet(
        s.invert_inputs(windows.inputs),
        s.invert_target(windows.targets),
        windows.target_dates,
        windows.keys,
    )


@dataclass
class SplitPlan:
    train: tuple[int, int]
    test: tuple[int, int]
    cv_folds: list[tuple[tuple[int, int], tuple[int, int]]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "train": list(self.train),
            "test": list(self.test),
            "cv_folds": [[list(a), list(b)] for a, b in self.cv_folds],
        }


def temporal_split(n_windows: int, train_fraction: float = 0.8) -> SplitPlan:
    if not 0.0 < train_fraction < 1.0:
        raise FeatureError(f"train_fraction must be in (0, 1), got {train_fraction}")
    if n_windows < 2:
        raise FeatureError(f"need at least 2 windows to split, got {n_windows}")
    k = int(np.floor(n_windows * train_fraction))
    if k == 0 or k == n_windows:
        raise FeatureError(f"split of {n_windows} windows at {train_fraction} leaves an empty side")
    return SplitPlan(train=(0, k), test=(k, n_windows))


def cv_folds(n_train: int, k: int) -> list[tuple[tuple[int, int], tuple[int, int]]]:
    """Expanding-window folds over the latter half of ``range(n_train)``.

    The latter half is cut into ``k`` equal consecutive blocks (aligned to the
    end; a remainder goes to the first training range). Fold ``i`` validates on
    block ``i`` and trains on everything before it.
    """
    if k < 2:
        raise FeatureError(f"fold count must be >= 2, got {k}")
    half = n_train - n_train // 2
    block = half // k
    if block == 0:
        raise FeatureError(f"insufficient data: {n_train} windows cannot hold {k} validation blocks")
    start = n_train - k * block
    return [((0, start + i * block), (start + i * block, start + (i + 1) * block)) for i in range(k)]


def dump_windows_csv(path: str | Path, windows: WindowSet) -> None:
    """Debug dump: key, target_date, 210 input values (row-major), target."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        cols = [f"x{t}_{name}" for t in range(SEQ_LEN) for name in FEATURE_ORDER]
        w.writerow(["key", "target_date", *cols, "target"])
        for i in range(len(windows)):
            w.writerow(
                [str(windows.keys[i]), windows.target_dates[i].isoformat()]
                + [repr(float(v)) for v in windows.inputs[i].ravel()]
                + [repr(float(windows.targets[i]))]
            )


def read_windows_csv(path: str | Path) -> WindowSet:
    inputs, targets, dates, keys = [], [], [], []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        next(r)
        for row in r:
            s, i = row[0].split("-")
            keys.append(SeriesKey(int(s), int(i)))
            dates.append(dt.date.fromisoformat(row[1]))
            inputs.append([float(v) for v in row[2:-1]])
            targets.append(float(row[-1]))
    arr = np.array(inputs, dtype=np.float64).reshape(-1, SEQ_LEN, N_FEATURES)
    return WindowSet(arr, np.array(targets, dtype=np.float64), dates, keys)
