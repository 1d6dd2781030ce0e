"""Naive-forecast MAPE on the test split of a prepared directory.

Deliberately independent of the package: it re-derives the test target dates
from series.csv and split.json with the csv/json modules only.

    python scripts/naive_baseline.py PREPARED_DIR [--lag 7]
"""

import argparse
import csv
import json
import math
from collections import defaultdict
from pathlib import Path

WARMUP_PLUS_WINDOW = 60


def naive_mape(prepared_dir, lag=7):
    prepared_dir = Path(prepared_dir)
    split = json.loads((prepared_dir / "split.json").read_text())
    frac = split["train_fraction"]
    series = defaultdict(list)
    with open(prepared_dir / "series.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            series[f"{row['store']}-{row['item']}"].append((row["date"], int(row["sales"])))

    terms = []
    for key, rows in series.items():
        rows.sort()
        values = [v for _, v in rows]
        n_windows = len(values) - WARMUP_PLUS_WINDOW
        n_train = math.floor(n_windows * frac)
        # window w targets day 60 + w
        for w in range(n_train, n_windows):
            day = WARMUP_PLUS_WINDOW + w
            actual = values[day]
            if actual == 0:
                continue
            terms.append(abs(actual - values[day - lag]) / abs(actual))
    return 100.0 * sum(terms) / len(terms)


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("prepared_dir")
    ap.add_argument("--lag", type=int, default=7)
    args = ap.parse_args()
    print(f"{naive_mape(args.prepared_dir, args.lag):.6f}")
