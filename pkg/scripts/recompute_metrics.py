"""Recompute MAPE (zero actuals excluded) and RMSE from a residuals.csv dump.

    python scripts/recompute_metrics.py RESIDUALS_CSV
"""

import csv
import json
import math
import sys


def recompute(path):
    ape, sq, n = [], 0.0, 0
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            a, p = float(row["actual"]), float(row["predicted"])
            if a != 0:
                ape.append(abs(a - p) / abs(a))
            sq += (a - p) ** 2
            n += 1
    return {"mape_percent": 100.0 * sum(ape) / len(ape), "rmse": math.sqrt(sq / n), "n_samples": n}


if __name__ == "__main__":
    print(json.dumps(recompute(sys.argv[1]), indent=2))
