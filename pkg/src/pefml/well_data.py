"""Depth-indexed well-log tables, summary statistics and dataset splitting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ArityError, DataError, DegenerateError, UnknownCurveError

#: The five input logs used to predict PEF, in canonical order.
INPUT_CURVES = ("RHOB", "NPHI", "GR", "VP", "VS")
TARGET_CURVE = "PEF"
DEPTH = "DEPTH"

CANONICAL_UNITS = {
    "DEPTH": "M",
    "RHOB": "G/C3",
    "NPHI": "V/V",
    "GR": "GAPI",
    "VP": "US/F",
    "VS": "US/F",
    "PEF": "B/E",
}

MODE_BINS = 50


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LogCurve:
    """One named log curve. ``null_mask`` is True where the sample is missing."""

    mnemonic: str
    unit: str
    samples: np.ndarray
    null_mask: np.ndarray = None

    def __post_init__(self):
        samples = _frozen(np.ravel(self.samples), np.float64)
        if self.null_mask is None:
            mask = ~np.isfinite(samples)
        else:
            mask = np.ravel(np.asarray(self.null_mask, dtype=bool))
        if mask.shape != samples.shape:
            raise ArityError(f"curve {self.mnemonic!r}: {samples.size} samples, {mask.size} mask entries")
        if not self.mnemonic or any(c.isspace() for c in self.mnemonic):
            raise DataError("invalid mnemonic", repr(self.mnemonic))
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "null_mask", _frozen(mask, bool))

    def __len__(self):
        return self.samples.size

    def __eq__(self, other):
        if not isinstance(other, LogCurve):
            return NotImplemented
        return (
            self.mnemonic == other.mnemonic
            and self.unit == other.unit
            and np.array_equal(self.null_mask, other.null_mask)
            and np.array_equal(self.samples[~self.null_mask], other.samples[~other.null_mask])
        )

    @property
    def valid(self):
        """Non-null samples."""
        return self.samples[~self.null_mask]

    def as_nan(self):
        """Samples with nulls replaced by NaN."""
        out = self.samples.copy()
        out[self.null_mask] = np.nan
        return out

    def take(self, indices):
        return LogCurve(self.mnemonic, self.unit, self.samples[indices], self.null_mask[indices])


@dataclass(frozen=True, eq=False)
class WellDataset:
    """A depth-indexed table of log curves."""

    depth: np.ndarray
    curves: tuple = field(default_factory=tuple)

    def __post_init__(self):
        depth = _frozen(np.ravel(self.depth), np.float64)
        curves = tuple(self.curves)
        if not np.all(np.isfinite(depth)):
            raise DataError("invalid depth", "non-finite depth value")
        if depth.size > 1 and not np.all(np.diff(depth) > 0):
            raise DataError("non-monotonic depth", "depth must be strictly increasing")
        seen = set()
        for c in curves:
            if len(c) != depth.size:
                raise ArityError(f"curve {c.mnemonic!r} has {len(c)} samples, expected {depth.size}")
            if c.mnemonic in seen:
                raise DataError("duplicate mnemonic", c.mnemonic)
            seen.add(c.mnemonic)
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "curves", curves)

    @property
    def row_count(self):
        return self.depth.size

    @property
    def mnemonics(self):
        return tuple(c.mnemonic for c in self.curves)

    def __contains__(self, mnemonic):
        return mnemonic in self.mnemonics

    def __eq__(self, other):
        if not isinstance(other, WellDataset):
            return NotImplemented
        return np.array_equal(self.depth, other.depth) and self.curves == other.curves

    def curve(self, mnemonic):
        for c in self.curves:
            if c.mnemonic == mnemonic:
                return c
        raise UnknownCurveError(mnemonic)

    def matrix(self, mnemonics):
        """Stack the named curves column-wise, nulls as NaN."""
        cols = [self.curve(m).as_nan() for m in mnemonics]
        if not cols:
            return np.empty((self.row_count, 0))
        return np.column_stack(cols)

    def complete_rows(self, mnemonics):
        """Boolean mask of rows where none of ``mnemonics`` is null."""
        mask = np.ones(self.row_count, dtype=bool)
        for m in mnemonics:
            mask &= ~self.curve(m).null_mask
        return mask

    def take(self, indices):
        """Row subset; ``indices`` are re-sorted so depth stays increasing."""
        idx = np.sort(np.asarray(indices, dtype=np.int64))
        return WellDataset(self.depth[idx], tuple(c.take(idx) for c in self.curves))


@dataclass(frozen=True)
class SummaryStatistics:
    """Per-curve descriptive statistics in the layout of a log summary table.

    ``skewness``, ``kurtosis`` and ``r_to_target`` raise
    :class:`DegenerateError` when the underlying variance is zero.
    """

    min: float
    max: float
    mean: float
    mode: float
    median: float
    std: float
    coef_variation: float
    _skewness: float | None = field(default=None, repr=False)
    _kurtosis: float | None = field(default=None, repr=False)
    _r_to_target: float | None = field(default=None, repr=False)

    @property
    def skewness(self):
        return _required(self._skewness)

    @property
    def kurtosis(self):
        return _required(self._kurtosis)

    @property
    def r_to_target(self):
        return _required(self._r_to_target)

    def to_dict(self):
        out = {}
        for name in ("min", "max", "mean", "mode", "median", "std", "coef_variation"):
            out[name] = getattr(self, name)
        for name in ("skewness", "kurtosis", "r_to_target"):
            v = getattr(self, "_" + name)
            out[name] = v
        return out


def _required(value):
    if value is None:
        raise DegenerateError("degenerate: zero variance")
    return value


def histogram_mode(values, bins=MODE_BINS):
    """Midpoint of the most populated of ``bins`` equal-width bins over [min, max].

    Ties go to the lowest bin.
    """
    v = np.asarray(values, dtype=np.float64)
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        return lo
    counts, edges = np.histogram(v, bins=bins, range=(lo, hi))
    k = int(np.argmax(counts))
    return float(0.5 * (edges[k] + edges[k + 1]))


def compute_statistics(curve, target):
    """Population moments of ``curve`` and its Pearson R against ``target``.

    Moments use listwise deletion of the curve's nulls; the correlation uses
    rows where both curves are non-null. Kurtosis is non-excess (normal = 3).
    """
    from .metrics import pearson_r

    if len(curve) != len(target):
        raise ArityError(f"curve has {len(curve)} rows, target has {len(target)}")
    x = curve.valid
    if x.size < 2:
        raise DataError("insufficient data", f"{curve.mnemonic}: {x.size} non-null samples")
    n = x.size
    mean = math.fsum(x) / n
    d = x - mean
    m2 = math.fsum(d * d) / n
    std = math.sqrt(m2)
    cv = std / abs(mean) if mean != 0 else (0.0 if std == 0 else math.inf)
    skew = kurt = r = None
    if m2 > 0:
        m3 = math.fsum(d**3) / n
        m4 = math.fsum(d**4) / n
        skew = m3 / m2**1.5
        kurt = m4 / m2**2
        both = ~curve.null_mask & ~target.null_mask
        if both.sum() >= 2:
            try:
                r = pearson_r(curve.samples[both], target.samples[both])
            except DegenerateError:
                r = None
    return SummaryStatistics(
        min=float(x.min()),
        max=float(x.max()),
        mean=mean,
        mode=histogram_mode(x),
        median=float(np.median(x)),
        std=std,
        coef_variation=cv,
        _skewness=skew,
        _kurtosis=kurt,
        _r_to_target=r,
    )


@dataclass(frozen=True, eq=False)
class DatasetSplit:
    train_indices: np.ndarray
    test_indices: np.ndarray
    validation_indices: np.ndarray

    def __post_init__(self):
        for name in ("train_indices", "test_indices", "validation_indices"):
            object.__setattr__(self, name, _frozen(getattr(self, name), np.int64))
        a, b, c = (set(x.tolist()) for x in self.parts())
        if a & b or a & c or b & c:
            raise DataError("overlapping split", "index sets must be disjoint")

    def parts(self):
        return self.train_indices, self.test_indices, self.validation_indices

    def __eq__(self, other):
        if not isinstance(other, DatasetSplit):
            return NotImplemented
        return all(np.array_equal(x, y) for x, y in zip(self.parts(), other.parts()))

    def to_dict(self):
        return {
            "train": self.train_indices.tolist(),
            "test": self.test_indices.tolist(),
            "validation": self.validation_indices.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["train"]), np.asarray(d["test"]), np.asarray(d["validation"]))


def split_dataset(dataset, counts, seed=42, strategy="shuffled"):
    """Partition rows into train/test/validation index sets of exact sizes.

    ``dataset`` may be a :class:`WellDataset` or a plain row count.
    ``sequential`` takes contiguous depth-ordered blocks; ``shuffled`` takes
    blocks of a seeded permutation. Indices within each set are sorted.
    """
    n = dataset if isinstance(dataset, (int, np.integer)) else dataset.row_count
    counts = tuple(int(c) for c in counts)
    if len(counts) != 3 or any(c < 0 for c in counts):
        raise DataError("invalid split counts", str(counts))
    if sum(counts) > n:
        raise DataError("split overflow", f"{sum(counts)} requested from {n} rows")
    if strategy == "sequential":
        order = np.arange(n)
    elif strategy == "shuffled":
        order = np.random.default_rng(seed).permutation(n)
    else:
        raise DataError("unknown split strategy", strategy)
    a, b, c = counts
    return DatasetSplit(
        np.sort(order[:a]),
        np.sort(order[a : a + b]),
        np.sort(order[a + b : a + b + c]),
    )
