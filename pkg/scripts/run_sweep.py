"""Run the full compression sweep (prepare -> sweep) and record wall time.

Synthetic data by default (800 days, 5 series); pass --kaggle PATH to use the
Kaggle store-item train.csv instead.

    python scripts/run_sweep.py --out runs/synthetic
    python scripts/run_sweep.py --kaggle data/train.csv --out runs/kaggle --jobs 4
"""

import argparse
import json
import time
from pathlib import Path

from lstm_compress import benchmark, dataset
from lstm_compress.prepared import prepare, write_prepared
from lstm_compress.training import TrainConfig


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--kaggle", type=Path)
    ap.add_argument("--out", type=Path, default=Path("runs/synthetic"))
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--n-days", type=int, default=800)
    ap.add_argument("--n-series", type=int, default=5)
    ap.add_argument("--noise-std", type=float, default=3.0)
    args = ap.parse_args()

    start = time.perf_counter()
    if args.kaggle:
        series = dataset.load_csv(args.kaggle)
    else:
        spec = dataset.SyntheticSpec(n_days=args.n_days, noise_std=args.noise_std, seed=args.seed)
        series = dataset.generate_synthetic_dataset(spec, args.n_series, 1)
    data = prepare(series)
    write_prepared(args.out / "prepared", data, dump_windows=False)
    tc = TrainConfig(epochs=args.epochs, learning_rate=args.lr, seed=args.seed)
    report = benchmark.run_sweep(data, benchmark.VALID_HIDDEN, tc, args.reps, args.out, jobs=args.jobs)
    report.metadata["wall_seconds_total"] = time.perf_counter() - start
    report.metadata["source"] = str(args.kaggle) if args.kaggle else "synthetic"
    benchmark.emit_report(report, args.out)
    print(benchmark.render_markdown(report))
    print(json.dumps({"wall_seconds_total": report.metadata["wall_seconds_total"]}))


if __name__ == "__main__":
    main()
