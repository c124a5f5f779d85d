"""Accuracy and interval-calibration metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ArityError, DataError, DegenerateError


def _pair(a, b, min_len=1):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise ArityError(f"lengths {a.size} and {b.size} differ")
    if a.size < min_len:
        raise DataError("insufficient data", f"need at least {min_len} values, got {a.size}")
    return a, b


def aape(actual, predicted):
    """Average absolute percentage error, in percent.

    The absolute value applies to the whole ratio, so negative actual values
    still contribute a non-negative term.
    """
    a, p = _pair(actual, predicted)
    if np.any(a == 0):
        raise DataError("zero actual value", f"{int(np.sum(a == 0))} zero entries")
    return float(100.0 / a.size * np.sum(np.abs((a - p) / a)))


def pearson_r(x, y):
    x, y = _pair(x, y, min_len=2)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = np.dot(dx, dx)
    syy = np.dot(dy, dy)
    if sxx == 0 or syy == 0:
        raise DegenerateError("degenerate: zero variance")
    r = np.dot(dx, dy) / (np.sqrt(sxx) * np.sqrt(syy))
    return float(np.clip(r, -1.0, 1.0))


def rmse(actual, predicted):
    a, p = _pair(actual, predicted)
    return float(np.sqrt(np.mean((a - p) ** 2)))


def outside_ci_fraction(actual, lower, upper):
    """Percentage of ``actual`` values falling outside ``[lower, upper]``.

    Values on a bound count as inside.
    """
    a = np.asarray(actual, dtype=np.float64).ravel()
    lo = np.asarray(lower, dtype=np.float64).ravel()
    hi = np.asarray(upper, dtype=np.float64).ravel()
    if not (a.size == lo.size == hi.size):
        raise ArityError(f"lengths {a.size}, {lo.size}, {hi.size} differ")
    if a.size == 0:
        raise DataError("insufficient data", "empty input")
    if np.any(lo > hi):
        raise DataError("invalid interval", f"{int(np.sum(lo > hi))} crossed bounds")
    outside = (a < lo) | (a > hi)
    return float(100.0 * np.count_nonzero(outside) / a.size)


@dataclass(frozen=True)
class EvaluationResult:
    aape_percent: float
    pearson_r: float
    rmse: float
    n: int
    outside_ci_percent: float | None = None

    def to_dict(self):
        d = asdict(self)
        if d["outside_ci_percent"] is None:
            del d["outside_ci_percent"]
        return d


def evaluate(actual, predicted, lower=None, upper=None):
    """All metrics for one prediction vector; interval metric only when bounds are given."""
    a, p = _pair(actual, predicted, min_len=2)
    ci = None
    if lower is not None and upper is not None:
        ci = outside_ci_fraction(a, lower, upper)
    return EvaluationResult(
        aape_percent=aape(a, p),
        pearson_r=pearson_r(a, p),
        rmse=rmse(a, p),
        n=int(a.size),
        outside_ci_percent=ci,
    )
