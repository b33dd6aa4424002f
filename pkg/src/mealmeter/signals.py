"""Channel, meal and subject data types plus CSV ingestion.

File conventions
----------------
Wristband channel (``<KIND>.csv``)
    row 1 start time (epoch seconds, UTC), row 2 sample rate in Hz,
    then one sample per row.
CGM export (``CGM.csv``)
    header ``timestamp,glucose_mg_dl``; ISO-8601 UTC timestamps, nominally
    300 s apart.
Meal log (``meals.csv``)
    header ``subject_id,timestamp,carbs_g,protein_g,fat_g,label``.
"""

from __future__ import annotations

import csv
import enum
import math
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError

CGM_PERIOD_S = 300.0
CGM_MAX_MISSING = 2


class ChannelKind(str, enum.Enum):
    BGL = "BGL"
    EDA = "EDA"
    HR = "HR"
    TEMP = "TEMP"
    BVP = "BVP"
    ACC_X = "ACC_X"
    ACC_Y = "ACC_Y"
    ACC_Z = "ACC_Z"
    ACC_MAG = "ACC_MAG"  # derived only


WRISTBAND_KINDS = (
    ChannelKind.EDA,
    ChannelKind.HR,
    ChannelKind.TEMP,
    ChannelKind.BVP,
    ChannelKind.ACC_X,
    ChannelKind.ACC_Y,
    ChannelKind.ACC_Z,
)

MEAL_LABELS = ("meal", "snack")


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """One uniformly sampled channel; sample ``i`` sits at ``start + i / rate``."""

    kind: ChannelKind
    start: float
    rate: float
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise ValidationError(f"{self.kind.value}: values must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise ValidationError(f"{self.kind.value}: non-finite sample at index {bad}")
        if not (math.isfinite(self.rate) and self.rate > 0):
            raise ValidationError(f"{self.kind.value}: rate must be positive, got {self.rate}")
        if not math.isfinite(self.start):
            raise ValidationError(f"{self.kind.value}: start must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "kind", ChannelKind(self.kind))
        object.__setattr__(self, "start", float(self.start))
        object.__setattr__(self, "rate", float(self.rate))
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size

    @property
    def end(self) -> float:
        """Time of the last sample."""
        return self.start + (self.values.size - 1) / self.rate

    @property
    def duration(self) -> float:
        """Covered time, one sample period per sample."""
        return self.values.size / self.rate

    @property
    def span(self) -> float:
        """First to last sample."""
        return (self.values.size - 1) / self.rate

    def times(self) -> np.ndarray:
        return self.start + np.arange(self.values.size) / self.rate


@dataclass(frozen=True)
class MealEvent:
    subject_id: str
    timestamp: float
    carbs_g: float
    protein_g: float
    fat_g: float
    label: str = "meal"

    def __post_init__(self):
        for name in ("carbs_g", "protein_g", "fat_g"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValidationError(f"{self.subject_id}@{self.timestamp}: {name} must be >= 0, got {v}")
        if max(self.carbs_g, self.protein_g, self.fat_g) <= 0:
            raise ValidationError(f"{self.subject_id}@{self.timestamp}: all macronutrients are zero")
        if self.label not in MEAL_LABELS:
            raise ValidationError(f"{self.subject_id}@{self.timestamp}: unknown label {self.label!r}")

    @property
    def targets(self) -> tuple[float, float, float]:
        return (self.carbs_g, self.protein_g, self.fat_g)


@dataclass
class SubjectRecord:
    """All recordings of one subject.

    ``days`` holds one channel map per monitoring day; each meal is matched to
    the day whose glucose trace spans it.
    """

    subject_id: str
    days: list[dict[ChannelKind, TimeSeries]] = field(default_factory=list)
    meals: list[MealEvent] = field(default_factory=list)


# --------------------------------------------------------------------------
# time helpers

def parse_timestamp(text: str) -> float:
    """Epoch seconds from either a number or an ISO-8601 string (naive = UTC)."""
    text = text.strip()
    try:
        value = float(text)
    except ValueError:
        pass
    else:
        if not math.isfinite(value):
            raise ValueError(f"non-finite timestamp {text!r}")
        return value
    iso = text[:-1] + "+00:00" if text.endswith(("Z", "z")) else text
    dt = datetime.fromisoformat(iso)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def format_timestamp(epoch: float) -> str:
    dt = datetime.fromtimestamp(epoch, tz=timezone.utc)
    if dt.microsecond:
        return dt.strftime("%Y-%m-%dT%H:%M:%S.%fZ")
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


# --------------------------------------------------------------------------
# wristband

def _parse_header_float(raw: str, what: str, path, line: int) -> float:
    try:
        value = float(raw.strip().split(",")[0])
    except ValueError:
        raise ParseError(f"malformed {what} header {raw.strip()!r}", path, line) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite {what} header", path, line)
    return value


def _fast_body(text: str) -> np.ndarray | None:
    """Parse one number per line in C; None if the body is not that simple."""
    text = text.rstrip()
    if not text:
        return None
    n_lines = text.count("\n") + 1
    # integer counts (accelerometer) parse several times faster as int64
    for dtype in (np.int64, float):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            try:
                values = np.fromstring(text, dtype=dtype, sep="\n")
            except (ValueError, DeprecationWarning):
                continue
        # blank or multi-field lines make the counts disagree
        if values.size == n_lines:
            return values.astype(float)
    return None


def parse_wristband_csv(path, kind: ChannelKind | str) -> TimeSeries:
    """Read a single-channel wristband export."""
    kind = ChannelKind(kind)
    if kind is ChannelKind.ACC_MAG:
        raise ValueError("ACC_MAG is derived and cannot be ingested")
    path = Path(path)
    text = path.read_text()
    head = text.split("\n", 2)
    if len(head) < 2 or (len(head) == 2 and not head[1].strip()):
        raise ParseError("missing start/rate header rows", path, len(head) + 1)
    start = _parse_header_float(head[0], "start", path, 1)
    rate = _parse_header_float(head[1], "rate", path, 2)
    if rate <= 0:
        raise ParseError(f"sample rate must be positive, got {rate}", path, 2)
    rest = head[2] if len(head) == 3 else ""
    values = _fast_body(rest)
    if values is None:
        values = _slow_body(rest, path)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        line = rest.splitlines()[bad[0]]
        raise ParseError(f"non-finite sample {line.strip()!r}", path, int(bad[0]) + 3)
    return TimeSeries(kind, start, rate, values)


def _slow_body(text: str, path) -> np.ndarray:
    body = text.splitlines()
    while body and not body[-1].strip():
        body.pop()
    if not body:
        raise ParseError("empty body", path, 3)
    for offset, raw in enumerate(body):
        try:
            float(raw)
        except ValueError:
            raise ParseError(f"non-numeric sample {raw.strip()!r}", path, offset + 3) from None
    return np.array(body, dtype=float)


def write_wristband_csv(path, ts: TimeSeries) -> None:
    """Inverse of :func:`parse_wristband_csv`; values are written round-trip exact."""
    head = f"{ts.start!r}\n{ts.rate!r}\n"
    v = ts.values
    if np.all(v == np.round(v)) and np.all(np.abs(v) < 2 ** 53):
        body = "\n".join(map(str, v.astype(np.int64).tolist()))
    else:
        body = "\n".join(map(repr, v.tolist()))
    Path(path).write_text(head + body + "\n")


# --------------------------------------------------------------------------
# CGM

def parse_cgm_csv(path) -> TimeSeries:
    """Read a CGM export onto its nominal 5-minute grid.

    Readings are snapped to the nearest grid slot counted from the first
    reading. Runs of up to two missing slots are filled by linear
    interpolation; longer dropouts raise.
    """
    path = Path(path)
    times, values = [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row or not "".join(row).strip():
                continue
            if lineno == 1 and row[0].strip().lower() == "timestamp":
                continue
            if len(row) < 2:
                raise ParseError("expected timestamp,glucose_mg_dl", path, lineno)
            try:
                t = parse_timestamp(row[0])
            except ValueError:
                raise ParseError(f"bad timestamp {row[0]!r}", path, lineno) from None
            try:
                g = float(row[1])
            except ValueError:
                raise ParseError(f"non-numeric glucose {row[1]!r}", path, lineno) from None
            if not math.isfinite(g):
                raise ParseError(f"non-finite glucose {row[1]!r}", path, lineno)
            if times and t <= times[-1][0]:
                raise ParseError("timestamps are not strictly increasing", path, lineno)
            times.append((t, lineno))
            values.append(g)
    if not values:
        raise ParseError("no glucose readings", path)

    t0 = times[0][0]
    slots = [round((t - t0) / CGM_PERIOD_S) for t, _ in times]
    for (prev, cur), (_, lineno) in zip(zip(slots, slots[1:]), times[1:]):
        if cur == prev:
            raise ParseError("two readings fall in the same 5-minute slot", path, lineno)
        if cur - prev - 1 > CGM_MAX_MISSING:
            gap = (cur - prev) * CGM_PERIOD_S
            raise ParseError(f"gap of {gap:.0f} s exceeds {CGM_MAX_MISSING} missing readings", path, lineno)
    grid = np.arange(slots[-1] + 1, dtype=float)
    filled = np.interp(grid, np.asarray(slots, dtype=float), np.asarray(values))
    return TimeSeries(ChannelKind.BGL, t0, 1.0 / CGM_PERIOD_S, filled)


def write_cgm_csv(path, ts: TimeSeries) -> None:
    rows = ["timestamp,glucose_mg_dl"]
    rows += [f"{format_timestamp(t)},{v!r}" for t, v in zip(ts.times().tolist(), ts.values.tolist())]
    Path(path).write_text("\n".join(rows) + "\n")


# --------------------------------------------------------------------------
# meal log

MEAL_LOG_HEADER = ["subject_id", "timestamp", "carbs_g", "protein_g", "fat_g", "label"]


def parse_meal_log(path) -> list[MealEvent]:
    """Read and validate a meal log; result is sorted by (subject_id, timestamp)."""
    path = Path(path)
    meals = []
    seen = set()
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row or not "".join(row).strip():
                continue
            if lineno == 1 and row[0].strip() == "subject_id":
                continue
            if len(row) != 6:
                raise ParseError(f"expected 6 columns, got {len(row)}", path, lineno)
            subject, ts, carbs, protein, fat, label = (c.strip() for c in row)
            try:
                t = parse_timestamp(ts)
                grams = [float(carbs), float(protein), float(fat)]
            except ValueError as exc:
                raise ParseError(str(exc), path, lineno) from None
            try:
                meal = MealEvent(subject, t, *grams, label=label)
            except ValidationError as exc:
                raise ValidationError(f"{path}:line {lineno}: {exc}") from None
            if (subject, t) in seen:
                raise ValidationError(f"{path}:line {lineno}: duplicate meal for {subject} at {ts}")
            seen.add((subject, t))
            meals.append(meal)
    meals.sort(key=lambda m: (m.subject_id, m.timestamp))
    return meals


def write_meal_log(path, meals) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MEAL_LOG_HEADER)
        for m in meals:
            writer.writerow([m.subject_id, format_timestamp(m.timestamp),
                             repr(m.carbs_g), repr(m.protein_g), repr(m.fat_g), m.label])


# --------------------------------------------------------------------------
# dataset directories

def load_day_dir(day_dir, kinds=None) -> dict[ChannelKind, TimeSeries]:
    """Load ``CGM.csv`` plus any ``<KIND>.csv`` files present in a day directory."""
    day_dir = Path(day_dir)
    channels = {}
    cgm = day_dir / "CGM.csv"
    if cgm.exists():
        channels[ChannelKind.BGL] = parse_cgm_csv(cgm)
    for kind in kinds or WRISTBAND_KINDS:
        f = day_dir / f"{kind.value}.csv"
        if f.exists():
            channels[kind] = parse_wristband_csv(f, kind)
    return channels


def load_subject(root, subject_id: str, meals, kinds=None) -> SubjectRecord:
    """Load ``root/<subject_id>/<day>/`` directories in sorted order."""
    subject_dir = Path(root) / subject_id
    if not subject_dir.is_dir():
        raise ValidationError(f"no data directory for subject {subject_id}")
    days = [load_day_dir(d, kinds) for d in sorted(subject_dir.iterdir()) if d.is_dir()]
    own = [m for m in meals if m.subject_id == subject_id]
    return SubjectRecord(subject_id, days, own)


def subject_ids(meals) -> list[str]:
    return sorted({m.subject_id for m in meals})
