"""Synthetic subject-day simulator with a known meal -> response dependence.

Each meal adds a bell-shaped (Gaussian) excursion to glucose whose peak is
``glucose_per_carb_g * carbs_g``, a heart-rate elevation proportional to meal
energy, phasic EDA bumps proportional to carbohydrate + protein mass and a
small skin-temperature rise. Everything else (tonic EDA drift, circadian
temperature, gravity on the accelerometer) is a per-day baseline whose phase
is random, so that time of day alone carries no information about meal size.

Random streams are keyed by ``(seed, subject, day, stream)`` which makes
every subject-day reproducible on its own.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .signals import (
    ChannelKind,
    MealEvent,
    SubjectRecord,
    TimeSeries,
    format_timestamp,
    write_cgm_csv,
    write_meal_log,
    write_wristband_csv,
)

KCAL_PER_GRAM = (4.0, 4.0, 9.0)  # carbohydrate, protein, fat
FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))

# stream ids for SeedSequence keys
_SUBJECT, _MEALS, _RESPONSES = 0, 1, 2
_CHANNEL_STREAM = {
    ChannelKind.BGL: 10, ChannelKind.HR: 11, ChannelKind.EDA: 12, ChannelKind.TEMP: 13,
    ChannelKind.ACC_X: 14, ChannelKind.BVP: 15,
}

DEFAULT_SCHEDULE = (
    ("08:30", "meal"),
    ("10:30", "snack"),
    ("12:30", "meal"),
    ("14:30", "snack"),
    ("16:30", "meal"),
)


@dataclass(frozen=True)
class SynthConfig:
    n_subjects: int = 12
    days_per_subject: int = 3
    schedule: tuple = DEFAULT_SCHEDULE
    session_start: str = "08:00"
    session_hours: float = 10.0
    cgm_lead_min: float = 120.0
    first_day: str = "2024-03-04"
    day_spacing: int = 2
    macro_split: tuple = (0.55, 0.20, 0.25)
    macro_jitter: float = 0.2
    min_grams: float = 5.0
    daily_kcal: tuple = (1800.0, 2600.0)
    energy_factors: tuple = (0.75, 1.0, 1.25)  # hypo-, eu-, hypercaloric meals
    meal_share: float = 0.25
    snack_share: float = 0.125

    # response gains
    glucose_per_carb_g: float = 1.0  # mg/dL peak per gram
    hr_per_kcal: float = 0.015  # bpm per kcal
    eda_per_gram: float = 0.01  # uS per gram of carbs + protein
    temp_per_kcal: float = 0.0005  # degC per kcal

    # response timing ranges, minutes (delay to peak, full width at half max)
    glucose_delay_min: tuple = (30.0, 45.0)
    glucose_width_min: tuple = (60.0, 90.0)
    hr_delay_min: tuple = (20.0, 40.0)
    hr_width_min: tuple = (60.0, 120.0)
    eda_delay_min: tuple = (5.0, 15.0)
    eda_width_min: tuple = (10.0, 25.0)
    temp_delay_min: tuple = (30.0, 60.0)
    temp_width_min: tuple = (90.0, 150.0)

    # per-day baselines
    eda_tonic_us: tuple = (1.0, 3.0)
    eda_drift_us_per_h: float = 0.05
    eda_wave_us: float = 0.1
    temp_circadian_c: float = 0.3

    noise_bgl: float = 2.0
    noise_hr: float = 1.5
    noise_eda: float = 0.03
    noise_temp: float = 0.03
    noise_acc: float = 1.5
    noise_bvp: float = 2.0

    rate_hr: float = 1.0
    rate_eda: float = 4.0
    rate_temp: float = 4.0
    rate_acc: float = 32.0
    rate_bvp: float = 64.0
    emit_bvp: bool = True

    seed: int = 0

    def validate(self) -> None:
        if self.n_subjects < 1 or self.days_per_subject < 1:
            raise ConfigError("n_subjects and days_per_subject must be >= 1")
        if not math.isclose(sum(self.macro_split), 1.0, abs_tol=1e-9):
            raise ConfigError(f"macro_split must sum to 1, got {sum(self.macro_split)}")
        if any(f < 0 for f in self.macro_split):
            raise ConfigError("macro_split fractions must be non-negative")
        for name in ("glucose_per_carb_g", "hr_per_kcal", "eda_per_gram", "temp_per_kcal"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        if self.session_hours <= 0 or self.cgm_lead_min < 0:
            raise ConfigError("session_hours must be positive and cgm_lead_min non-negative")
        for label in (lbl for _, lbl in self.schedule):
            if label not in ("meal", "snack"):
                raise ConfigError(f"unknown schedule label {label!r}")
        offsets = [self._clock(t) - self._clock(self.session_start) for t, _ in self.schedule]
        if any(o < 0 or o > self.session_hours * 3600 for o in offsets):
            raise ConfigError("meal schedule exceeds the monitoring session")
        if offsets != sorted(offsets) or len(set(offsets)) != len(offsets):
            raise ConfigError("meal schedule must be strictly increasing")
        for name in ("rate_hr", "rate_eda", "rate_temp", "rate_acc", "rate_bvp"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")

    @staticmethod
    def _clock(hhmm: str) -> float:
        h, m = hhmm.split(":")
        return int(h) * 3600 + int(m) * 60

    def day_origin(self, day: int) -> float:
        """Epoch seconds of midnight UTC on study day ``day``."""
        base = datetime.fromisoformat(self.first_day).replace(tzinfo=timezone.utc).timestamp()
        return base + day * self.day_spacing * 86400.0

    def session_bounds(self, day: int) -> tuple[float, float]:
        start = self.day_origin(day) + self._clock(self.session_start)
        return start, start + self.session_hours * 3600.0


def zero_gain(config: SynthConfig, keep: tuple = ()) -> SynthConfig:
    """Copy of ``config`` with every response gain not in ``keep`` set to 0."""
    gains = ("glucose_per_carb_g", "hr_per_kcal", "eda_per_gram", "temp_per_kcal")
    return replace(config, **{g: 0.0 for g in gains if g not in keep})


@dataclass(frozen=True)
class MealResponse:
    """Injected response parameters of one meal (times in seconds)."""

    kcal: float
    glucose_delay: float
    glucose_width: float
    hr_delay: float
    hr_width: float
    eda_delay: float
    eda_width: float
    temp_delay: float
    temp_width: float


@dataclass(frozen=True)
class GroundTruthRow:
    meal: MealEvent
    day: int
    response: MealResponse
    glucose_peak: float


GROUND_TRUTH_HEADER = [
    "subject_id", "timestamp", "day", "label", "carbs_g", "protein_g", "fat_g", "kcal",
    "glucose_peak_mg_dl", "glucose_delay_s", "glucose_width_s", "hr_delay_s", "hr_width_s",
    "eda_delay_s", "eda_width_s", "temp_delay_s", "temp_width_s",
]


def bell(t, center: float, fwhm: float):
    """Unit-peak Gaussian with the given full width at half maximum."""
    sigma = fwhm * FWHM_TO_SIGMA
    return np.exp(-0.5 * ((np.asarray(t, dtype=float) - center) / sigma) ** 2)


def glucose_excursion(t, meal_time: float, carbs_g: float, gain: float,
                      delay: float, width: float):
    """Glucose rise above baseline caused by one meal; peaks at ``gain * carbs_g``."""
    return gain * carbs_g * bell(t, meal_time + delay, width)


def _rng(config: SynthConfig, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((config.seed, *key)))


def _uniform(rng, bounds) -> float:
    lo, hi = bounds
    return float(rng.uniform(lo, hi)) if hi > lo else float(lo)


@dataclass(frozen=True)
class _SubjectParams:
    daily_kcal: float
    bgl_base: float
    hr_base: float


def _subject_params(config: SynthConfig, s: int) -> _SubjectParams:
    rng = _rng(config, s, _SUBJECT)
    return _SubjectParams(
        daily_kcal=_uniform(rng, config.daily_kcal),
        bgl_base=float(rng.uniform(85.0, 95.0)),
        hr_base=float(rng.uniform(65.0, 75.0)),
    )


def subject_id(s: int) -> str:
    return f"S{s + 1:02d}"


def _day_meals(config: SynthConfig, s: int, d: int, params: _SubjectParams) -> list[GroundTruthRow]:
    rng = _rng(config, s, d, _MEALS)
    rng_resp = _rng(config, s, d, _RESPONSES)
    origin = config.day_origin(d)
    rows = []
    for clock, label in config.schedule:
        share = config.meal_share if label == "meal" else config.snack_share
        factor = config.energy_factors[int(rng.integers(len(config.energy_factors)))]
        kcal = params.daily_kcal * factor * share
        grams = []
        for frac, per_g in zip(config.macro_split, KCAL_PER_GRAM):
            jitter = rng.uniform(-config.macro_jitter, config.macro_jitter)
            grams.append(max(config.min_grams, round(kcal * frac * (1.0 + jitter) / per_g, 1)))
        meal = MealEvent(subject_id(s), origin + config._clock(clock), *grams, label=label)
        minutes = 60.0
        resp = MealResponse(
            kcal=sum(g * c for g, c in zip(grams, KCAL_PER_GRAM)),
            glucose_delay=_uniform(rng_resp, config.glucose_delay_min) * minutes,
            glucose_width=_uniform(rng_resp, config.glucose_width_min) * minutes,
            hr_delay=_uniform(rng_resp, config.hr_delay_min) * minutes,
            hr_width=_uniform(rng_resp, config.hr_width_min) * minutes,
            eda_delay=_uniform(rng_resp, config.eda_delay_min) * minutes,
            eda_width=_uniform(rng_resp, config.eda_width_min) * minutes,
            temp_delay=_uniform(rng_resp, config.temp_delay_min) * minutes,
            temp_width=_uniform(rng_resp, config.temp_width_min) * minutes,
        )
        rows.append(GroundTruthRow(meal, d, resp, config.glucose_per_carb_g * meal.carbs_g))
    return rows


def _grid(start: float, stop: float, rate: float) -> np.ndarray:
    n = int(math.floor((stop - start) * rate + 1e-9)) + 1
    return start + np.arange(n) / rate


def _response(t, rows, gain, attr_delay, attr_width, amount) -> np.ndarray:
    out = np.zeros_like(t)
    if gain == 0:
        return out
    for row in rows:
        r = row.response
        out += gain * amount(row) * bell(t, row.meal.timestamp + getattr(r, attr_delay), getattr(r, attr_width))
    return out


def _noise(rng, sd: float, n: int) -> np.ndarray:
    return rng.normal(0.0, sd, n) if sd > 0 else np.zeros(n)


def simulate_day(config: SynthConfig, s: int, d: int, rows=None) -> dict[ChannelKind, TimeSeries]:
    """Generate every channel of subject ``s`` on day ``d``."""
    params = _subject_params(config, s)
    if rows is None:
        rows = _day_meals(config, s, d, params)
    start, stop = config.session_bounds(d)
    channels = {}

    def rng_for(kind):
        return _rng(config, s, d, _CHANNEL_STREAM[kind])

    # glucose, recorded continuously so it starts before the lab session
    t = _grid(start - config.cgm_lead_min * 60.0, stop, 1.0 / 300.0)
    bgl = params.bgl_base + _response(
        t, rows, config.glucose_per_carb_g, "glucose_delay", "glucose_width", lambda r: r.meal.carbs_g)
    bgl = bgl + _noise(rng_for(ChannelKind.BGL), config.noise_bgl, t.size)
    channels[ChannelKind.BGL] = TimeSeries(ChannelKind.BGL, t[0], 1.0 / 300.0, np.maximum(bgl, 40.0))

    def kcal(r):
        return r.response.kcal

    # heart rate
    def hr_curve(tt):
        return params.hr_base + _response(tt, rows, config.hr_per_kcal, "hr_delay", "hr_width", kcal)

    t = _grid(start, stop, config.rate_hr)
    hr = hr_curve(t) + _noise(rng_for(ChannelKind.HR), config.noise_hr, t.size)
    channels[ChannelKind.HR] = TimeSeries(ChannelKind.HR, start, config.rate_hr, hr)

    # EDA: tonic level + drift + slow oscillation, phasic meal bumps
    rng = rng_for(ChannelKind.EDA)
    level = _uniform(rng, config.eda_tonic_us)
    slope = rng.uniform(-1.0, 1.0) * config.eda_drift_us_per_h / 3600.0
    period, phase = rng.uniform(2.0, 5.0) * 3600.0, rng.uniform(0.0, 2 * math.pi)
    t = _grid(start, stop, config.rate_eda)
    tonic = level + slope * (t - start) + config.eda_wave_us * np.sin(2 * math.pi * (t - start) / period + phase)
    phasic = _response(t, rows, config.eda_per_gram, "eda_delay", "eda_width",
                       lambda r: r.meal.carbs_g + r.meal.protein_g)
    eda = np.maximum(tonic + phasic + _noise(rng, config.noise_eda, t.size), 0.01)
    channels[ChannelKind.EDA] = TimeSeries(ChannelKind.EDA, start, config.rate_eda, eda)

    # skin temperature
    rng = rng_for(ChannelKind.TEMP)
    offset = rng.uniform(-0.5, 0.5)
    period, phase = rng.uniform(4.0, 8.0) * 3600.0, rng.uniform(0.0, 2 * math.pi)
    t = _grid(start, stop, config.rate_temp)
    temp = 33.0 + offset + config.temp_circadian_c * np.sin(2 * math.pi * (t - start) / period + phase)
    temp += _response(t, rows, config.temp_per_kcal, "temp_delay", "temp_width", kcal)
    temp += _noise(rng, config.noise_temp, t.size)
    channels[ChannelKind.TEMP] = TimeSeries(ChannelKind.TEMP, start, config.rate_temp, temp)

    # accelerometer in 1/64 g counts: gravity in a random wrist orientation + jitter
    rng = rng_for(ChannelKind.ACC_X)
    g = rng.normal(size=3)
    g = 64.0 * g / np.linalg.norm(g)
    t = _grid(start, stop, config.rate_acc)
    for axis, kind in enumerate((ChannelKind.ACC_X, ChannelKind.ACC_Y, ChannelKind.ACC_Z)):
        a = np.round(g[axis] + _noise(rng, config.noise_acc, t.size))
        channels[kind] = TimeSeries(kind, start, config.rate_acc, a)

    if config.emit_bvp:
        rng = rng_for(ChannelKind.BVP)
        t = _grid(start, stop, config.rate_bvp)
        beat_phase = 2 * math.pi * np.cumsum(hr_curve(t) / 60.0) / config.rate_bvp
        wave = 50.0 * (np.sin(beat_phase) + 0.5 * np.sin(2 * beat_phase + 0.6))
        bvp = np.round(wave + _noise(rng, config.noise_bvp, t.size), 2)
        channels[ChannelKind.BVP] = TimeSeries(ChannelKind.BVP, start, config.rate_bvp, bvp)
    return channels


@dataclass
class SyntheticDataset:
    """Meal log and ground truth up front; channel data generated on demand."""

    config: SynthConfig
    ground_truth: list[GroundTruthRow] = field(default_factory=list)

    @property
    def meals(self) -> list[MealEvent]:
        return [row.meal for row in self.ground_truth]

    @property
    def subject_ids(self) -> list[str]:
        return [subject_id(s) for s in range(self.config.n_subjects)]

    def record(self, s: int) -> SubjectRecord:
        sid = subject_id(s)
        rows = [r for r in self.ground_truth if r.meal.subject_id == sid]
        days = []
        for d in range(self.config.days_per_subject):
            days.append(simulate_day(self.config, s, d, [r for r in rows if r.day == d]))
        return SubjectRecord(sid, days, [r.meal for r in rows])

    def records(self):
        """Yield one :class:`SubjectRecord` at a time (full-rate data is large)."""
        for s in range(self.config.n_subjects):
            yield self.record(s)


def simulate(config: SynthConfig | None = None) -> SyntheticDataset:
    config = config or SynthConfig()
    config.validate()
    rows = []
    for s in range(config.n_subjects):
        params = _subject_params(config, s)
        for d in range(config.days_per_subject):
            rows.extend(_day_meals(config, s, d, params))
    return SyntheticDataset(config, rows)


def write_ground_truth(path, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GROUND_TRUTH_HEADER)
        for row in rows:
            m, r = row.meal, row.response
            w.writerow([
                m.subject_id, format_timestamp(m.timestamp), row.day + 1, m.label,
                repr(m.carbs_g), repr(m.protein_g), repr(m.fat_g), repr(r.kcal), repr(row.glucose_peak),
                repr(r.glucose_delay), repr(r.glucose_width), repr(r.hr_delay), repr(r.hr_width),
                repr(r.eda_delay), repr(r.eda_width), repr(r.temp_delay), repr(r.temp_width),
            ])


def write_dataset(dataset: SyntheticDataset, out_dir) -> Path:
    """Write device-format files: ``meals.csv``, ``ground_truth.csv`` and
    ``<subject>/day<k>/{CGM,EDA,HR,TEMP,ACC_X,ACC_Y,ACC_Z[,BVP]}.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_meal_log(out / "meals.csv", dataset.meals)
    write_ground_truth(out / "ground_truth.csv", dataset.ground_truth)
    for record in dataset.records():
        for d, channels in enumerate(record.days):
            day_dir = out / record.subject_id / f"day{d + 1}"
            day_dir.mkdir(parents=True, exist_ok=True)
            for kind, ts in channels.items():
                if kind is ChannelKind.BGL:
                    write_cgm_csv(day_dir / "CGM.csv", ts)
                else:
                    write_wristband_csv(day_dir / f"{kind.value}.csv", ts)
    return out
