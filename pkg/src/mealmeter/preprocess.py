"""Resampling, smoothing and meal-window extraction.

Fixed order: resample every channel to the common rate, derive the
acceleration magnitude and smooth it, cut windows around each meal, then
min-normalize glucose jointly over the pre- and post-meal segments.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ValidationError
from .signals import ChannelKind, MealEvent, SubjectRecord, TimeSeries

log = logging.getLogger(__name__)


class SignalName(str, enum.Enum):
    BGL_PRE = "BGL_PRE"
    BGL_POST = "BGL_POST"
    EDA = "EDA"
    HR = "HR"
    TEMP = "TEMP"
    ACC_MAG = "ACC_MAG"
    BVP = "BVP"


DEFAULT_SIGNALS = (
    SignalName.BGL_PRE,
    SignalName.BGL_POST,
    SignalName.EDA,
    SignalName.HR,
    SignalName.TEMP,
    SignalName.ACC_MAG,
)

# raw channels each signal is derived from
SIGNAL_SOURCES = {
    SignalName.BGL_PRE: (ChannelKind.BGL,),
    SignalName.BGL_POST: (ChannelKind.BGL,),
    SignalName.EDA: (ChannelKind.EDA,),
    SignalName.HR: (ChannelKind.HR,),
    SignalName.TEMP: (ChannelKind.TEMP,),
    SignalName.ACC_MAG: (ChannelKind.ACC_X, ChannelKind.ACC_Y, ChannelKind.ACC_Z),
    SignalName.BVP: (ChannelKind.BVP,),
}


@dataclass(frozen=True)
class PreprocessConfig:
    rate: float = 8.0
    horizon_min: float = 90.0
    smoothing_window: int = 20
    smooth_all: bool = False  # smooth EDA/HR/TEMP/BVP too, not only ACC_MAG
    signals: tuple = DEFAULT_SIGNALS

    @property
    def window_samples(self) -> int:
        return int(round(self.horizon_min * 60.0 * self.rate))


@dataclass(frozen=True)
class MealWindow:
    meal: MealEvent
    segments: dict  # SignalName -> np.ndarray


@dataclass(frozen=True)
class SkippedMeal:
    meal: MealEvent
    reason: str


# --------------------------------------------------------------------------
# single-channel transforms

def resample(ts: TimeSeries, target_rate: float) -> TimeSeries:
    """Put ``ts`` on the grid ``start + k / target_rate`` spanning the same time.

    Upsampling interpolates linearly between neighbouring samples. When
    downsampling, output ``k`` is the mean of all source samples inside
    ``[start + k/target_rate, start + (k+1)/target_rate)``; empty intervals
    fall back to linear interpolation.
    """
    if not target_rate > 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    n = ts.values.size
    if n < 2:
        raise ValueError("resample needs at least 2 source samples")
    n_out = int(math.floor(ts.span * target_rate + 1e-9)) + 1
    # positions of the output grid in source-sample units
    pos = np.arange(n_out) * (ts.rate / target_rate)
    src = np.arange(n, dtype=float)
    if target_rate >= ts.rate:
        out = np.interp(pos, src, ts.values)
        return TimeSeries(ts.kind, ts.start, target_rate, out)

    ratio = ts.rate / target_rate
    if abs(ratio - round(ratio)) < 1e-9:
        m = int(round(ratio))
        full = n // m
        out = np.empty(n_out)
        out[:full] = ts.values[: full * m].reshape(full, m).mean(axis=1)
        if n_out > full:
            out[full:] = ts.values[full * m:].mean()
        return TimeSeries(ts.kind, ts.start, target_rate, out)

    # general ratio: bucket each source sample by its output interval
    bucket = np.floor(src * target_rate / ts.rate + 1e-9).astype(int)
    bucket = np.minimum(bucket, n_out - 1)
    sums = np.bincount(bucket, weights=ts.values, minlength=n_out)
    counts = np.bincount(bucket, minlength=n_out)
    out = np.interp(pos, src, ts.values)
    filled = counts > 0
    out[filled] = sums[filled] / counts[filled]
    return TimeSeries(ts.kind, ts.start, target_rate, out)


def moving_average(ts: TimeSeries, window: int = 20) -> TimeSeries:
    return TimeSeries(ts.kind, ts.start, ts.rate, trailing_mean(ts.values, window))


def trailing_mean(values, window: int) -> np.ndarray:
    """Causal mean over the last ``window`` samples; expanding for the first ones."""
    if window < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        return x.copy()
    sums = np.convolve(x, np.ones(min(window, x.size)))[: x.size]
    out = sums / np.minimum(np.arange(1, x.size + 1), window)
    # rounding can push a mean of equal values one ulp outside the data range
    np.clip(out, x.min(), x.max(), out=out)
    return out


def acc_magnitude(x: TimeSeries, y: TimeSeries, z: TimeSeries) -> TimeSeries:
    for other in (y, z):
        if other.rate != x.rate or other.start != x.start or len(other) != len(x):
            raise ValidationError("accelerometer axes are on different sample grids")
    mag = np.sqrt(x.values ** 2 + y.values ** 2 + z.values ** 2)
    return TimeSeries(ChannelKind.ACC_MAG, x.start, x.rate, mag)


def min_normalize(segment) -> np.ndarray:
    seg = np.asarray(segment, dtype=float)
    if seg.size == 0:
        raise ValueError("cannot normalize an empty segment")
    return seg - seg.min()


# --------------------------------------------------------------------------
# windows

def prepare_day(channels: dict, config: PreprocessConfig) -> dict[SignalName, TimeSeries]:
    """Resample and smooth one day's channels into per-signal series."""
    needed = {SignalName.BGL_POST if s is SignalName.BGL_PRE else s for s in config.signals}
    out = {}
    for signal in needed:
        sources = SIGNAL_SOURCES[signal]
        missing = [k.value for k in sources if k not in channels]
        if missing:
            raise DataError(f"missing channel(s) {', '.join(missing)} for signal {signal.value}")
        if signal is SignalName.ACC_MAG:
            axes = [resample(channels[k], config.rate) for k in sources]
            n = min(len(a) for a in axes)
            axes = [TimeSeries(a.kind, a.start, a.rate, a.values[:n]) for a in axes]
            series = moving_average(acc_magnitude(*axes), config.smoothing_window)
        else:
            series = resample(channels[sources[0]], config.rate)
            if config.smooth_all and signal is not SignalName.BGL_POST:
                series = moving_average(series, config.smoothing_window)
        out[signal] = series
    return out


def _cut(series: TimeSeries, t0: float, n: int):
    """``n`` samples starting at the first grid point at or after ``t0``; None if out of range."""
    i0 = int(math.ceil((t0 - series.start) * series.rate - 1e-6))
    if i0 < 0 or i0 + n > len(series):
        return None
    return series.values[i0:i0 + n]


def _day_for(meal: MealEvent, days) -> int | None:
    for d, channels in enumerate(days):
        bgl = channels.get(ChannelKind.BGL)
        if bgl is not None and bgl.start <= meal.timestamp <= bgl.end:
            return d
    return None


def extract_meal_windows(record: SubjectRecord, config: PreprocessConfig = PreprocessConfig()):
    """Cut pre/post-meal windows for every meal of ``record``.

    Returns ``(windows, skipped)``. Meals without full coverage of every
    configured signal are skipped with a logged warning.
    """
    horizon = config.horizon_min * 60.0
    n = config.window_samples
    windows, skipped = [], []
    prepared = {}
    for meal in sorted(record.meals, key=lambda m: m.timestamp):
        d = _day_for(meal, record.days)
        if d is None:
            reason = "no glucose recording covers the meal"
            log.warning("skipping %s @ %s: %s", meal.subject_id, meal.timestamp, reason)
            skipped.append(SkippedMeal(meal, reason))
            continue
        if d not in prepared:
            try:
                prepared[d] = prepare_day(record.days[d], config)
            except DataError as exc:
                raise DataError(f"subject {record.subject_id}, day {d + 1}: {exc}") from None
        series = prepared[d]
        segments, short = {}, []
        for signal in config.signals:
            if signal is SignalName.BGL_PRE:
                seg = _cut(series[SignalName.BGL_POST], meal.timestamp - horizon, n)
            else:
                seg = _cut(series[signal], meal.timestamp, n)
            if seg is None:
                short.append(signal.value)
            else:
                segments[signal] = np.array(seg)
        if short:
            reason = f"insufficient coverage for {', '.join(short)}"
            log.warning("skipping %s @ %s: %s", meal.subject_id, meal.timestamp, reason)
            skipped.append(SkippedMeal(meal, reason))
            continue
        bgl_keys = [s for s in (SignalName.BGL_PRE, SignalName.BGL_POST) if s in segments]
        if bgl_keys:
            floor = min(segments[s].min() for s in bgl_keys)
            for s in bgl_keys:
                segments[s] = segments[s] - floor
        for s, seg in segments.items():
            seg.flags.writeable = False
        windows.append(MealWindow(meal, segments))
    return windows, skipped


@dataclass
class WindowSet:
    windows: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    def extend(self, result) -> None:
        w, s = result
        self.windows.extend(w)
        self.skipped.extend(s)


def extract_all(records, config: PreprocessConfig = PreprocessConfig()) -> WindowSet:
    out = WindowSet()
    for record in records:
        out.extend(extract_meal_windows(record, config))
    return out
