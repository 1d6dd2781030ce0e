"""Accuracy metrics in sales units and the paired t-test over repeated runs."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import nn_core
from .features import Scaler, WindowSet


@dataclass
class EvalResult:
    mape_percent: float
    rmse: float
    n_samples: int
    zero_policy: str = "exclude"
    actual: np.ndarray | None = field(default=None, repr=False)
    predicted: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "mape_percent": self.mape_percent,
            "rmse": self.rmse,
            "n_samples": self.n_samples,
            "zero_policy": self.zero_policy,
        }


@dataclass
class TTestResult:
    t_statistic: float
    p_value: float
    df: int
    mean_difference: float
    zero_variance: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        # JSON has no infinity literal
        if math.isinf(d["t_statistic"]):
            d["t_statistic"] = "inf" if d["t_statistic"] > 0 else "-inf"
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TTestResult":
        d = dict(d)
        if isinstance(d["t_statistic"], str):
            d["t_statistic"] = float(d["t_statistic"])
        return cls(**d)


def _pair(actual, predicted):
    y = np.asarray(actual, dtype=np.float64).ravel()
    p = np.asarray(predicted, dtype=np.float64).ravel()
    if y.shape != p.shape:
        raise ValueError(f"length mismatch: {y.size} vs {p.size}")
    return y, p


def mape(actual, predicted, zero_policy: str = "exclude", epsilon: float = 1.0) -> float:
    """Mean absolute percentage error in percent.

    ``zero_policy="exclude"`` drops terms with ``actual == 0``; ``"epsilon"``
    uses ``max(|actual|, epsilon)`` as the denominator.
    """
    y, p = _pair(actual, predicted)
    if zero_policy == "exclude":
        keep = y != 0
        y, p = y[keep], p[keep]
        denom = np.abs(y)
    elif zero_policy == "epsilon":
        denom = np.maximum(np.abs(y), epsilon)
    else:
        raise ValueError(f"unknown zero_policy {zero_policy!r}")
    if y.size == 0:
        raise ValueError("no MAPE terms remain after zero handling")
    return float(100.0 * np.mean(np.abs(y - p) / denom))


def rmse(actual, predicted) -> float:
    y, p = _pair(actual, predicted)
    if y.size == 0:
        raise ValueError("empty input")
    return float(np.sqrt(np.mean((y - p) ** 2)))


def evaluate(config: nn_core.ModelConfig, weights: nn_core.ModelWeights, windows: WindowSet,
             scaler: Scaler, zero_policy: str = "exclude") -> EvalResult:
    """Score normalized windows after mapping predictions and targets back to sales units."""
    if len(windows) == 0:
        raise ValueError("no windows to evaluate")
    pred = scaler.invert_target(nn_core.predict(config, weights, windows.inputs))
    actual = scaler.invert_target(windows.targets)
    return EvalResult(
        mape(actual, pred, zero_policy), rmse(actual, pred), len(windows), zero_policy, actual, pred
    )


def write_residuals(path: str | Path, windows: WindowSet, result: EvalResult) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["key", "target_date", "actual", "predicted"])
        for k, d, a, p in zip(windows.keys, windows.target_dates, result.actual, result.predicted):
            w.writerow([str(k), d.isoformat(), repr(float(a)), repr(float(p))])


# Student t distribution via the regularized incomplete beta function


def _betacf(a: float, b: float, x: float, max_iter: int = 500, tol: float = 1e-15) -> float:
    # modified Lentz evaluation of the continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_regularized(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and 0 <= x <= 1."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must be in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf2(t: float, df: float) -> float:
    """Two-sided tail probability P(|T| >= |t|) with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0
    x = df / (df + t * t)
    return min(1.0, max(0.0, betainc_regularized(df / 2.0, 0.5, x)))


def student_t_cdf(t: float, df: float) -> float:
    tail = 0.5 * student_t_sf2(t, df)
    return 1.0 - tail if t > 0 else tail


def paired_ttest(a, b) -> TTestResult:
    """Two-sided paired t-test of ``a - b`` (pairs matched by position)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    n = a.size
    if n < 2:
        raise ValueError(f"paired t-test needs n >= 2, got {n}")
    d = a - b
    mean = float(np.mean(d))
    sd = float(np.std(d, ddof=1))
    df = n - 1
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(0.0, 1.0, df, 0.0, zero_variance=True)
        return TTestResult(math.copysign(math.inf, mean), 0.0, df, mean, zero_variance=True)
    t = mean / (sd / math.sqrt(n))
    return TTestResult(t, student_t_sf2(t, df), df, mean)
