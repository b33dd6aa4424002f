"""End-to-end orchestration shared by the CLI and the experiment scripts."""

from __future__ import annotations

import logging
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import baseline
from .analysis import EvalReport, contributions, mean_contributions
from .config import RunConfig
from .errors import DataError, MealMeterError
from .features import TARGETS, FeatureMatrix, build_feature_matrix, column_names
from .model import fit_pipeline, predict, split_train_test
from .preprocess import SIGNAL_SOURCES, SignalName, extract_meal_windows
from .signals import ChannelKind, load_subject, parse_meal_log, subject_ids

log = logging.getLogger(__name__)


class StageError(MealMeterError):
    """Wraps any pipeline error with the name of the failing stage."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 3 if isinstance(cause, OSError) else 1)
        super().__init__(f"[{stage}] {cause}")


@contextmanager
def stage(name: str):
    try:
        yield
    except StageError:
        raise
    except (MealMeterError, OSError) as exc:
        raise StageError(name, exc) from exc


def concat(parts, columns=None, column_signals=None) -> FeatureMatrix:
    parts = [p for p in parts if len(p)]
    if not parts:
        return FeatureMatrix([], list(columns or []), list(column_signals or []))
    first = parts[0]
    return FeatureMatrix(
        [k for p in parts for k in p.keys], list(first.columns), list(first.column_signals),
        np.vstack([p.X for p in parts]), np.vstack([p.Y for p in parts]), dict(first.meta))


@dataclass
class Featurized:
    features: FeatureMatrix
    huo: FeatureMatrix
    skipped: list = field(default_factory=list)


def required_channels(config: RunConfig) -> tuple:
    kinds = []
    for s in config.signals:
        for k in SIGNAL_SOURCES[SignalName(s)]:
            if k not in kinds:
                kinds.append(k)
    if ChannelKind.BGL not in kinds:
        kinds.insert(0, ChannelKind.BGL)
    return tuple(kinds)


def check_channels(record, config: RunConfig) -> None:
    needed = required_channels(config)
    for d, channels in enumerate(record.days):
        missing = [k.value for k in needed if k not in channels]
        if missing:
            raise DataError(f"subject {record.subject_id}, day {d + 1}: missing channel {', '.join(missing)}")


def featurize_records(records, config: RunConfig) -> Featurized:
    """Window, featurize and discard raw data one subject at a time."""
    pre = config.preprocess()
    signals = pre.signals
    parts, huo_parts, skipped = [], [], []
    n_samples = pre.window_samples
    bandwidth = config.huo_bandwidth_min * 60.0 or None
    bank = baseline.KernelBank.for_window(n_samples, pre.rate, config.huo_kernels, bandwidth)
    with_post = SignalName.BGL_POST in signals
    pre_post = pre if with_post else replace(pre, signals=(*signals, SignalName.BGL_POST))
    it = iter(records)
    while True:
        with stage("ingest"):
            record = next(it, None)
            if record is None:
                break
            check_channels(record, config)
        with stage("preprocess"):
            windows, skip = extract_meal_windows(record, pre_post)
        skipped.extend(skip)
        log.info("subject %s: %d windows, %d skipped", record.subject_id, len(windows), len(skip))
        if windows:
            with stage("featurize"):
                parts.append(build_feature_matrix(windows, signals, pre.rate, config.entropy_bins))
                huo_parts.append(baseline.build_baseline_matrix(windows, pre.rate, bank, n_samples))
    cols = column_names(signals)
    features = concat(parts, cols, [s.value for s in signals for _ in range(16)])
    huo = concat(huo_parts, [f"BGL_POST_GAUSS_AUC_{m + 1}" for m in range(config.huo_kernels)],
                 ["BGL_POST"] * config.huo_kernels)
    features.meta.update({"entropy_bins": config.entropy_bins, "rate": pre.rate})
    return Featurized(features, huo, skipped)


def load_records(data_dir, config: RunConfig):
    data_dir = Path(data_dir)
    meals = parse_meal_log(data_dir / "meals.csv")
    if not meals:
        raise DataError(f"{data_dir / 'meals.csv'} lists no meals")
    kinds = [k for k in required_channels(config) if k is not ChannelKind.BGL]
    for sid in subject_ids(meals):
        yield load_subject(data_dir, sid, meals, kinds)


def featurize_dataset(data_dir, config: RunConfig) -> Featurized:
    return featurize_records(load_records(data_dir, config), config)


# --------------------------------------------------------------------------
# evaluation

@dataclass
class Evaluation:
    method: str
    report: EvalReport
    models: dict  # unit -> FittedPipeline or RegressionModel
    test_keys: list
    actual: np.ndarray
    raw: np.ndarray
    predicted: np.ndarray
    contributions: list = field(default_factory=list)

    def scatter(self) -> dict:
        return {t: (self.actual[:, j], self.predicted[:, j]) for j, t in enumerate(TARGETS)}


def _units(fm: FeatureMatrix, scope: str):
    if scope == "pooled":
        return [("pooled", fm)]
    return [(sid, fm.for_subject(sid)) for sid in fm.subjects]


def _fit_predict(method, train, test, config, scope, unit):
    if method == "mealmeter":
        model = fit_pipeline(train, config.n_components, scope=scope,
                             subject_id=None if unit == "pooled" else unit,
                             split_seed=config.seed, config=config.as_dict())
        pred = predict(model, test)
        return model, pred.raw, pred.clamped
    model = baseline.fit_baseline(train)
    raw, clamped = baseline.predict_baseline(model, test)
    return model, raw, clamped


def evaluate(fm: FeatureMatrix, config: RunConfig, method: str | None = None,
             scope: str | None = None, skipped: int = 0) -> Evaluation:
    method = method or config.method
    scope = scope or config.scope
    report = EvalReport(scope, method, skipped_windows=skipped)
    models, keys, actual, raw, clamped = {}, [], [], [], []
    for unit, rows in _units(fm, scope):
        with stage("split"):
            train, test = split_train_test(rows, config.split_ratio, config.seed)
        with stage("fit"):
            model, r, c = _fit_predict(method, train, test, config, scope, unit)
        models[unit] = model
        report.add(unit, test.Y, c)
        keys += test.keys
        actual.append(test.Y)
        raw.append(r)
        clamped.append(c)
        log.info("%s/%s %s: %d train, %d test", method, scope, unit, len(train), len(test))
    ev = Evaluation(method, report, models, keys, np.vstack(actual), np.vstack(raw), np.vstack(clamped))
    if method == "mealmeter":
        ev.contributions = contribution_reports(fm, config, models if scope == "pooled" else None,
                                                models if scope == "per-subject" else None)
    return ev


def contribution_reports(fm, config, pooled_models=None, subject_models=None) -> list:
    """Pooled-model and per-subject-averaged contributions, both labelled.

    Whichever scope was not evaluated is fitted here on the same split rule.
    """
    if pooled_models is None:
        train, _ = split_train_test(fm, config.split_ratio, config.seed)
        pooled = fit_pipeline(train, config.n_components)
    else:
        pooled = pooled_models["pooled"]
    reports = [contributions(pooled, "pooled")]
    if subject_models is None:
        subject_models = {}
        for sid in fm.subjects:
            rows = fm.for_subject(sid)
            try:
                train, _ = split_train_test(rows, config.split_ratio, config.seed)
                subject_models[sid] = fit_pipeline(train, config.n_components, scope="per-subject",
                                                   subject_id=sid)
            except DataError as exc:
                log.warning("no per-subject contributions for %s: %s", sid, exc)
    if subject_models:
        reports.append(mean_contributions([contributions(m) for m in subject_models.values()],
                                          "per_subject_mean"))
    return reports
