"""Time- and frequency-domain features per signal segment, and the feature matrix.

Definitions (all deterministic, closed form):

* SD, SKEW, KURT use population moments; KURT is excess kurtosis.
* AUTOCORR is the lag-1 autocorrelation about the segment mean.
* IQR uses linearly interpolated quartiles.
* ENTROPY is the natural-log Shannon entropy of a histogram with
  ``entropy_bins`` equal bins spanning [min, max].
* ZCR counts strict sign changes of the mean-removed segment per step.
* The spectrum is a plain periodogram of the mean-removed segment over the
  positive frequencies, scaled so the bins sum to the population variance.
  SPEC_ENTROPY is normalized by ln(number of bins).

Constant segments give 0 for every shape and spectral feature.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, NumericalError
from .preprocess import SignalName
from .signals import format_timestamp, parse_timestamp

FEATURE_VERSION = 1
DEFAULT_ENTROPY_BINS = 16
TARGETS = ("carbs_g", "protein_g", "fat_g")


class FeatureName(str, enum.Enum):
    MIN = "MIN"
    MAX = "MAX"
    MEAN = "MEAN"
    SD = "SD"
    SKEW = "SKEW"
    KURT = "KURT"
    RANGE = "RANGE"
    RMS = "RMS"
    MEDIAN = "MEDIAN"
    AUTOCORR = "AUTOCORR"
    IQR = "IQR"
    ENTROPY = "ENTROPY"
    ZCR = "ZCR"
    PSD_POWER = "PSD_POWER"
    DOM_FREQ = "DOM_FREQ"
    SPEC_ENTROPY = "SPEC_ENTROPY"


TIME_FEATURES = tuple(FeatureName)[:13]
FREQ_FEATURES = tuple(FeatureName)[13:]


def time_features(segment, entropy_bins: int = DEFAULT_ENTROPY_BINS) -> dict[FeatureName, float]:
    x = np.asarray(segment, dtype=float)
    n = x.size
    if n < 2:
        raise ValueError("time features need at least 2 samples")
    lo, hi = float(x.min()), float(x.max())
    mean = float(x.mean())
    q1, median, q3 = (float(v) for v in np.percentile(x, [25, 50, 75]))
    out = {
        FeatureName.MIN: lo,
        FeatureName.MAX: hi,
        FeatureName.MEAN: mean,
        FeatureName.RANGE: hi - lo,
        FeatureName.RMS: math.sqrt(float(np.mean(x * x))),
        FeatureName.MEDIAN: median,
        FeatureName.IQR: q3 - q1,
    }
    if hi == lo:
        out.update({FeatureName.SD: 0.0, FeatureName.SKEW: 0.0, FeatureName.KURT: 0.0,
                    FeatureName.AUTOCORR: 0.0, FeatureName.ENTROPY: 0.0, FeatureName.ZCR: 0.0})
        return {k: out[k] for k in TIME_FEATURES}

    d = x - mean
    # moments of d / max|d| stay O(1), so tiny or huge spreads cannot underflow
    scale = float(np.max(np.abs(d)))
    u = d / scale
    u2 = u * u
    m2 = float(np.mean(u2))
    m3 = float(np.mean(u2 * u))
    m4 = float(np.mean(u2 * u2))
    counts, _ = np.histogram(x, bins=entropy_bins, range=(lo, hi))
    p = counts[counts > 0] / n
    neg, pos = d < 0, d > 0
    out.update({
        FeatureName.SD: scale * math.sqrt(m2),
        FeatureName.SKEW: m3 / m2 ** 1.5,
        FeatureName.KURT: m4 / (m2 * m2) - 3.0,
        FeatureName.AUTOCORR: float(np.dot(u[:-1], u[1:]) / np.dot(u, u)),
        FeatureName.ENTROPY: float(-np.sum(p * np.log(p))),
        FeatureName.ZCR: float(np.count_nonzero((neg[:-1] & pos[1:]) | (pos[:-1] & neg[1:]))) / (n - 1),
    })
    return {k: out[k] for k in TIME_FEATURES}


def periodogram(segment, rate: float) -> tuple[np.ndarray, np.ndarray]:
    """One-sided periodogram over bins k = 1..n//2, summing to the population variance."""
    x = np.asarray(segment, dtype=float)
    n = x.size
    spec = np.abs(np.fft.rfft(x - x.mean())) ** 2 / (n * n)
    power = 2.0 * spec[1:]
    if n % 2 == 0:
        power[-1] = spec[-1]  # Nyquist bin has no mirror image
    freqs = np.arange(1, power.size + 1) * rate / n
    return freqs, power


def freq_features(segment, rate: float) -> dict[FeatureName, float]:
    x = np.asarray(segment, dtype=float)
    if x.size < 4:
        raise ValueError("frequency features need at least 4 samples")
    if not rate > 0:
        raise ValueError("rate must be positive")
    zero = {FeatureName.PSD_POWER: 0.0, FeatureName.DOM_FREQ: 0.0, FeatureName.SPEC_ENTROPY: 0.0}
    if x.max() == x.min():
        return zero
    freqs, power = periodogram(x, rate)
    total = float(power.sum())
    if total <= 0:
        return zero
    p = power / total
    nz = p[p > 0]
    m = power.size
    spec_entropy = float(-np.sum(nz * np.log(nz)) / math.log(m)) if m > 1 else 0.0
    return {
        FeatureName.PSD_POWER: total,
        FeatureName.DOM_FREQ: float(freqs[int(np.argmax(power))]),
        FeatureName.SPEC_ENTROPY: spec_entropy,
    }


def segment_features(segment, rate: float, entropy_bins: int = DEFAULT_ENTROPY_BINS) -> np.ndarray:
    """All 16 features in :class:`FeatureName` order."""
    tf = time_features(segment, entropy_bins)
    ff = freq_features(segment, rate)
    return np.array([tf[f] for f in TIME_FEATURES] + [ff[f] for f in FREQ_FEATURES])


def column_names(signals) -> list[str]:
    return [f"{SignalName(s).value}_{f.value}" for s in signals for f in FeatureName]


@dataclass
class FeatureMatrix:
    """Rows are meal events, columns named ``<SIGNAL>_<FEATURE>``.

    ``column_signals[j]`` is the signal that owns column ``j`` and is what
    signal-level contributions group by.
    """

    keys: list = field(default_factory=list)  # (subject_id, timestamp)
    columns: list = field(default_factory=list)
    column_signals: list = field(default_factory=list)
    X: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    Y: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float).reshape(len(self.keys), len(self.columns))
        self.Y = np.asarray(self.Y, dtype=float).reshape(len(self.keys), len(TARGETS))
        if len(self.column_signals) != len(self.columns):
            raise ValueError("column_signals must align with columns")

    def __len__(self):
        return len(self.keys)

    @property
    def signals(self) -> list[str]:
        return list(dict.fromkeys(self.column_signals))

    @property
    def subjects(self) -> list[str]:
        return sorted({k[0] for k in self.keys})

    def take(self, idx) -> "FeatureMatrix":
        idx = np.asarray(idx, dtype=int)
        return FeatureMatrix([self.keys[i] for i in idx], list(self.columns), list(self.column_signals),
                             self.X[idx], self.Y[idx], dict(self.meta))

    def for_subject(self, subject_id: str) -> "FeatureMatrix":
        return self.take([i for i, k in enumerate(self.keys) if k[0] == subject_id])


def build_feature_matrix(windows, signals, rate: float = 8.0,
                         entropy_bins: int = DEFAULT_ENTROPY_BINS) -> FeatureMatrix:
    signals = [SignalName(s) for s in signals]
    columns = column_names(signals)
    col_signals = [s.value for s in signals for _ in FeatureName]
    windows = sorted(windows, key=lambda w: (w.meal.subject_id, w.meal.timestamp))
    X = np.zeros((len(windows), len(columns)))
    for i, w in enumerate(windows):
        missing = [s.value for s in signals if s not in w.segments]
        if missing:
            raise DataError(f"window {w.meal.subject_id}@{w.meal.timestamp} lacks {', '.join(missing)}")
        for j, s in enumerate(signals):
            if not np.all(np.isfinite(w.segments[s])):
                raise NumericalError(f"non-finite input at row {i} ({w.meal.subject_id}), "
                                     f"columns {columns[16 * j]}..{columns[16 * j + 15]}")
        X[i] = np.concatenate([segment_features(w.segments[s], rate, entropy_bins) for s in signals])
    bad = np.argwhere(~np.isfinite(X))
    if bad.size:
        r, c = bad[0]
        raise NumericalError(f"non-finite feature at row {r} ({windows[r].meal.subject_id}), column {columns[c]}")
    keys = [(w.meal.subject_id, w.meal.timestamp) for w in windows]
    Y = np.array([w.meal.targets for w in windows], dtype=float).reshape(len(windows), 3)
    meta = {"feature_version": FEATURE_VERSION, "entropy_bins": entropy_bins, "rate": rate}
    return FeatureMatrix(keys, columns, col_signals, X, Y, meta)


# --------------------------------------------------------------------------
# CSV

def write_feature_csv(path, fm: FeatureMatrix) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "timestamp", *fm.columns, *TARGETS])
        for key, x, y in zip(fm.keys, fm.X.tolist(), fm.Y.tolist()):
            w.writerow([key[0], format_timestamp(key[1]), *map(repr, x), *map(repr, y)])


def _signal_of(column: str, known) -> str:
    for s in sorted(known, key=len, reverse=True):
        if column.startswith(s + "_"):
            return s
    raise DataError(f"column {column!r} does not belong to any known signal")


def read_feature_csv(path) -> FeatureMatrix:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty feature file")
    header = rows[0]
    if header[:2] != ["subject_id", "timestamp"] or tuple(header[-3:]) != TARGETS:
        raise DataError(f"{path}: unexpected header")
    columns = header[2:-3]
    known = [s.value for s in SignalName]
    col_signals = [_signal_of(c, known) for c in columns]
    keys, X, Y = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"{path}:line {lineno}: expected {len(header)} fields")
        try:
            keys.append((row[0], parse_timestamp(row[1])))
            X.append([float(v) for v in row[2:-3]])
            Y.append([float(v) for v in row[-3:]])
        except ValueError as exc:
            raise DataError(f"{path}:line {lineno}: {exc}") from None
    X = np.array(X, dtype=float).reshape(len(keys), len(columns))
    bad = np.argwhere(~np.isfinite(X))
    if bad.size:
        r, c = bad[0]
        raise NumericalError(f"{path}: non-finite feature at row {r} ({keys[r][0]}), column {columns[c]}")
    return FeatureMatrix(keys, columns, col_signals, X, np.array(Y))
