"""Min-max scaling, outlier flags and invalid-value screening."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DataError, DegenerateError, UnknownCurveError


@dataclass(frozen=True, eq=False)
class NormalizationParams:
    """Observed ``lo``/``hi`` per column (scalars for a single curve)."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lo, dtype=np.float64)
        hi = np.array(self.hi, dtype=np.float64)
        if lo.shape != hi.shape:
            raise DataError("invalid normalization", "lo/hi shapes differ")
        if not np.all(hi > lo):
            raise DegenerateError("degenerate range", f"min={lo.tolist()} max={hi.tolist()}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def __eq__(self, other):
        return (
            isinstance(other, NormalizationParams)
            and np.array_equal(self.lo, other.lo)
            and np.array_equal(self.hi, other.hi)
        )

    @property
    def span(self):
        return self.hi - self.lo

    def to_dict(self):
        return {"min": self.lo.tolist(), "max": self.hi.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["min"], d["max"])

    @classmethod
    def identity(cls, dim=None):
        if dim is None:
            return cls(0.0, 1.0)
        return cls(np.zeros(dim), np.ones(dim))


def fit_minmax(values):
    """Observed min and max, ignoring NaN. 2-D input gives per-column params."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim == 1:
        v = v[~np.isnan(v)]
        if v.size < 2:
            raise DataError("insufficient data", "need at least 2 non-null values")
        lo, hi = v.min(), v.max()
        if lo == hi:
            raise DegenerateError("degenerate range", f"all values equal {lo}")
        return NormalizationParams(lo, hi)
    if v.ndim != 2 or v.shape[0] < 2:
        raise DataError("insufficient data", "need a 2-D array with at least 2 rows")
    with np.errstate(all="ignore"):
        lo, hi = np.nanmin(v, axis=0), np.nanmax(v, axis=0)
    if np.any(np.isnan(lo)):
        raise DataError("insufficient data", "a column has no non-null values")
    return NormalizationParams(lo, hi)


def normalize(values, params):
    """Map to ``(x - min) / (max - min)``; no clamping outside the fitted range."""
    return (np.asarray(values, dtype=np.float64) - params.lo) / params.span


def denormalize(values, params):
    return np.asarray(values, dtype=np.float64) * params.span + params.lo


@dataclass(frozen=True)
class Normalization:
    """Input and target scaling carried by every fitted model."""

    inputs: NormalizationParams
    target: NormalizationParams

    @classmethod
    def fit(cls, X, y):
        return cls(fit_minmax(np.atleast_2d(np.asarray(X, dtype=np.float64))), fit_minmax(y))

    @classmethod
    def identity(cls, dim):
        return cls(NormalizationParams.identity(dim), NormalizationParams.identity())

    def to_dict(self):
        return {"inputs": self.inputs.to_dict(), "target": self.target.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(NormalizationParams.from_dict(d["inputs"]), NormalizationParams.from_dict(d["target"]))


def _finite(values, min_count):
    v = np.asarray(values, dtype=np.float64).ravel()
    ok = ~np.isnan(v)
    if ok.sum() < min_count:
        raise DataError("insufficient data", f"need at least {min_count} non-null values")
    return v, ok


def iqr_filter(values, k=1.5):
    """Flag values outside ``[Q1 - k*IQR, Q3 + k*IQR]``; NaN is never flagged.

    Quartiles interpolate linearly between order statistics at positions
    ``(n - 1) * p``.
    """
    v, ok = _finite(values, 4)
    q1, q3 = np.quantile(v[ok], [0.25, 0.75], method="linear")
    iqr = q3 - q1
    flags = np.zeros(v.shape, dtype=bool)
    flags[ok] = (v[ok] < q1 - k * iqr) | (v[ok] > q3 + k * iqr)
    return flags


def sigma_filter(values, k=3.0):
    """Flag ``|x - mean| > k * std`` with the population std; NaN is never flagged."""
    v, ok = _finite(values, 2)
    x = v[ok]
    mean = x.mean()
    std = x.std()
    if std == 0:
        raise DegenerateError("degenerate: zero variance")
    flags = np.zeros(v.shape, dtype=bool)
    flags[ok] = np.abs(x - mean) > k * std
    return flags


@dataclass(frozen=True)
class ScreenRule:
    name: str
    mnemonic: str
    flag: Callable = field(compare=False)


def _nonpositive(m):
    return ScreenRule(f"nonpositive {m}", m, lambda x: x <= 0)


NPHI_LOW = -0.05
NPHI_HIGH = 1.0

DEFAULT_RULES = (
    _nonpositive("RHOB"),
    _nonpositive("GR"),
    _nonpositive("VP"),
    _nonpositive("VS"),
    _nonpositive("PEF"),
    ScreenRule("NPHI out of range", "NPHI", lambda x: (x < NPHI_LOW) | (x > NPHI_HIGH)),
)

MISSING = "missing"


@dataclass(frozen=True, eq=False)
class ScreeningReport:
    rule_ids: tuple
    masks: dict

    @property
    def counts(self):
        return {r: int(np.count_nonzero(self.masks[r])) for r in self.rule_ids}

    @property
    def flagged(self):
        """Rows flagged by any rule."""
        out = None
        for r in self.rule_ids:
            out = self.masks[r].copy() if out is None else out | self.masks[r]
        return out

    @property
    def empty(self):
        return not any(self.counts.values())

    def to_dict(self):
        return {
            "rules": list(self.rule_ids),
            "counts": self.counts,
            "rows": {r: np.flatnonzero(self.masks[r]).tolist() for r in self.rule_ids},
        }


def screen_invalid(dataset, rules=None):
    """Flag physically invalid samples and missing samples, row by row.

    With the default rule set, rules whose curve is absent are skipped; an
    explicit rule naming an absent curve raises :class:`UnknownCurveError`.
    """
    if rules is None:
        rules = [r for r in DEFAULT_RULES if r.mnemonic in dataset]
    masks = {}
    ids = []
    for rule in rules:
        if rule.mnemonic not in dataset:
            raise UnknownCurveError(rule.mnemonic)
        c = dataset.curve(rule.mnemonic)
        with np.errstate(invalid="ignore"):
            m = np.asarray(rule.flag(c.samples), dtype=bool) & ~c.null_mask
        masks[rule.name] = m
        ids.append(rule.name)
    missing = np.zeros(dataset.row_count, dtype=bool)
    for c in dataset.curves:
        missing |= c.null_mask
    masks[MISSING] = missing
    ids.append(MISSING)
    return ScreeningReport(tuple(ids), masks)
