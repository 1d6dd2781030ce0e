"""Sales CSV ingestion and synthetic daily-sales generation.

Input files follow the Kaggle store-item layout: a ``date,store,item,sales``
header followed by one row per (day, store, item). Series are keyed by
``(store, item)`` and returned sorted and gap-checked.

Synthetic series use numpy's PCG64 generator (``numpy.random.default_rng``)
seeded explicitly, so a given (spec, seed) always yields the same records.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

HEADER = ["date", "store", "item", "sales"]
SYNTHETIC_START = dt.date(2013, 1, 1)
MIN_SERIES_DAYS = 61


class DatasetError(ValueError):
    """Raised for malformed or inconsistent sales data."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class SeriesKey(NamedTuple):
    store: int
    item: int

    def __str__(self) -> str:
        return f"{self.store}-{self.item}"


@dataclass(frozen=True)
class SalesRecord:
    date: dt.date
    store: int
    item: int
    sales: int

    def __post_init__(self):
        if self.sales < 0:
            raise DatasetError(f"negative sales {self.sales}")
        if self.store < 1 or self.item < 1:
            raise DatasetError(f"store/item ids must be >= 1, got {self.store}/{self.item}")

    @property
    def key(self) -> SeriesKey:
        return SeriesKey(self.store, self.item)


@dataclass(frozen=True)
class SyntheticSpec:
    n_days: int = 800
    base_level: float = 50.0
    weekly_amplitude: float = 10.0
    yearly_amplitude: float = 15.0
    trend_per_day: float = 0.01
    noise_std: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.n_days < MIN_SERIES_DAYS:
            raise DatasetError(f"n_days must be >= {MIN_SERIES_DAYS}, got {self.n_days}")
        if self.noise_std < 0:
            raise DatasetError(f"noise_std must be >= 0, got {self.noise_std}")


def _parse_row(row: list[str], lineno: int, path: str) -> SalesRecord:
    if len(row) != 4:
        raise DatasetError(f"expected 4 fields, got {len(row)}", lineno, path)
    try:
        date = dt.date.fromisoformat(row[0].strip())
        store, item, sales = (int(v) for v in row[1:])
    except ValueError as exc:
        raise DatasetError(f"malformed row {row!r} ({exc})", lineno, path) from None
    if sales < 0:
        raise DatasetError(f"negative sales {sales}", lineno, path)
    try:
        return SalesRecord(date, store, item, sales)
    except DatasetError as exc:
        raise DatasetError(str(exc), lineno, path) from None


def load_csv(path: str | Path, fill_policy: str = "reject_gaps") -> dict[SeriesKey, list[SalesRecord]]:
    """Read a sales CSV into per-series, date-ordered record lists.

    ``fill_policy`` is ``"reject_gaps"`` (default) or ``"zero_fill"``; the latter
    inserts ``sales=0`` rows for missing days between a series' first and last date.
    """
    if fill_policy not in ("reject_gaps", "zero_fill"):
        raise ValueError(f"unknown fill_policy {fill_policy!r}")
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")

    series: dict[SeriesKey, dict[dt.date, tuple[SalesRecord, int]]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != HEADER:
            raise DatasetError(f"header must be {','.join(HEADER)}", 1, str(path))
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            rec = _parse_row(row, lineno, str(path))
            days = series.setdefault(rec.key, {})
            if rec.date in days:
                first = days[rec.date][1]
                raise DatasetError(
                    f"duplicate (date, store, item) = ({rec.date}, {rec.store}, {rec.item}); first seen on line {first}",
                    lineno,
                    str(path),
                )
            days[rec.date] = (rec, lineno)

    out: dict[SeriesKey, list[SalesRecord]] = {}
    for key in sorted(series):
        by_date = series[key]
        ordered = [by_date[d][0] for d in sorted(by_date)]
        out[key] = _fill_gaps(ordered, fill_policy, str(path), by_date)
    return out


def _fill_gaps(records, fill_policy, path, by_date) -> list[SalesRecord]:
    filled = [records[0]]
    for rec in records[1:]:
        prev = filled[-1].date
        gap = (rec.date - prev).days
        if gap > 1:
            if fill_policy == "reject_gaps":
                raise DatasetError(
                    f"gap in series {rec.key}: {gap - 1} missing day(s) between {prev} and {rec.date}",
                    by_date[rec.date][1],
                    path,
                )
            for k in range(1, gap):
                filled.append(SalesRecord(prev + dt.timedelta(days=k), rec.store, rec.item, 0))
        filled.append(rec)
    return filled


def count_records(data: dict[SeriesKey, list[SalesRecord]]) -> int:
    return sum(len(v) for v in data.values())


def write_csv(path: str | Path, records: Iterable[SalesRecord]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HEADER)
        for r in records:
            writer.writerow([r.date.isoformat(), r.store, r.item, r.sales])


def synthetic_values(spec: SyntheticSpec) -> np.ndarray:
    """Integer sales values of the synthetic generator, as a float array."""
    spec.validate()
    t = np.arange(spec.n_days, dtype=np.float64)
    level = (
        spec.base_level
        + spec.trend_per_day * t
        + spec.weekly_amplitude * np.sin(2 * math.pi * t / 7)
        + spec.yearly_amplitude * np.sin(2 * math.pi * t / 365.25)
    )
    if spec.noise_std > 0:
        rng = np.random.default_rng(spec.seed)
        level = level + rng.normal(0.0, spec.noise_std, size=spec.n_days)
    return np.maximum(0.0, np.round(level))


def generate_synthetic(spec: SyntheticSpec, store: int = 1, item: int = 1,
                       start: dt.date = SYNTHETIC_START) -> list[SalesRecord]:
    values = synthetic_values(spec)
    return [
        SalesRecord(start + dt.timedelta(days=t), store, item, int(v))
        for t, v in enumerate(values)
    ]


def generate_synthetic_dataset(spec: SyntheticSpec, n_stores: int = 1,
                               n_items: int = 1) -> dict[SeriesKey, list[SalesRecord]]:
    """Several synthetic series sharing one calendar.

    Series ``(s, i)`` scales the level and amplitudes by ``1 + 0.1*(s-1) + 0.05*(i-1)``
    and draws noise from ``seed + series_index``.
    """
    out = {}
    for s in range(1, n_stores + 1):
        for i in range(1, n_items + 1):
            scale = 1.0 + 0.1 * (s - 1) + 0.05 * (i - 1)
            idx = (s - 1) * n_items + (i - 1)
            sub = SyntheticSpec(
                n_days=spec.n_days,
                base_level=spec.base_level * scale,
                weekly_amplitude=spec.weekly_amplitude * scale,
                yearly_amplitude=spec.yearly_amplitude * scale,
                trend_per_day=spec.trend_per_day * scale,
                noise_std=spec.noise_std,
                seed=spec.seed + idx,
            )
            out[SeriesKey(s, i)] = generate_synthetic(sub, store=s, item=i)
    return out
