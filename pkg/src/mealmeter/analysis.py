"""Evaluation metrics, feature/signal contributions and report export."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .features import TARGETS

TARGET_SHORT = {"carbs_g": "carbs", "protein_g": "protein", "fat_g": "fat"}


class UndefinedCorrelationWarning(RuntimeWarning):
    pass


def _pair(y, yhat):
    y = np.asarray(y, dtype=float).ravel()
    yhat = np.asarray(yhat, dtype=float).ravel()
    if y.size != yhat.size:
        raise ValueError(f"length mismatch: {y.size} vs {yhat.size}")
    if y.size == 0:
        raise ValueError("empty input")
    return y, yhat


def mae(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.mean(np.abs(y - yhat)))


def rmsre(y, yhat) -> float:
    """Root mean squared relative error; every ``y`` must be strictly positive."""
    y, yhat = _pair(y, yhat)
    if np.any(y == 0):
        raise ValueError("rmsre is undefined for zero targets; exclude them first")
    return float(np.sqrt(np.mean(((y - yhat) / y) ** 2)))


def pearson(y, yhat) -> float:
    """Sample correlation; NaN (with a warning) if either side has zero variance."""
    y, yhat = _pair(y, yhat)
    if y.size < 2:
        raise ValueError("pearson needs at least 2 pairs")
    dy, dh = y - y.mean(), yhat - yhat.mean()
    sy, sh = math.sqrt(float(dy @ dy)), math.sqrt(float(dh @ dh))
    if sy == 0 or sh == 0 or np.ptp(y) == 0 or np.ptp(yhat) == 0:
        which = "targets" if np.ptp(y) == 0 else "predictions"
        warnings.warn(f"correlation undefined: {which} have zero variance", UndefinedCorrelationWarning,
                      stacklevel=2)
        return float("nan")
    r = float(dy @ dh) / (sy * sh)
    return max(-1.0, min(1.0, r))


@dataclass
class TargetMetrics:
    mae: float
    rmsre: float
    r: float
    n: int
    rmsre_excluded: int = 0
    note: str = ""


def evaluate_target(y, yhat) -> TargetMetrics:
    y, yhat = _pair(y, yhat)
    keep = y != 0
    excluded = int(np.count_nonzero(~keep))
    rel = rmsre(y[keep], yhat[keep]) if keep.any() else float("nan")
    note = ""
    if y.size >= 2:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", UndefinedCorrelationWarning)
            r = pearson(y, yhat)
        if caught:
            note = str(caught[0].message)
    else:
        r, note = float("nan"), "correlation undefined: fewer than 2 test rows"
    return TargetMetrics(mae(y, yhat), rel, r, int(y.size), excluded, note)


@dataclass
class EvalRow:
    unit: str  # subject id, "pooled" or "average"
    metrics: dict  # target -> TargetMetrics
    n_test: int


@dataclass
class EvalReport:
    scope: str
    method: str
    rows: list = field(default_factory=list)
    skipped_windows: int = 0

    def add(self, unit: str, y, yhat) -> EvalRow:
        y = np.asarray(y, dtype=float).reshape(-1, len(TARGETS))
        yhat = np.asarray(yhat, dtype=float).reshape(-1, len(TARGETS))
        if y.shape[0] == 0:
            raise DataError(f"empty test set for {unit}")
        row = EvalRow(unit, {t: evaluate_target(y[:, j], yhat[:, j]) for j, t in enumerate(TARGETS)},
                      y.shape[0])
        self.rows.append(row)
        return row

    def average(self) -> EvalRow:
        """Unweighted mean over rows, as in a per-subject summary table."""
        metrics = {}
        for t in TARGETS:
            ms = [r.metrics[t] for r in self.rows]

            def avg(vals):
                vals = [v for v in vals if not math.isnan(v)]
                return float(np.mean(vals)) if vals else float("nan")

            metrics[t] = TargetMetrics(avg([m.mae for m in ms]), avg([m.rmsre for m in ms]),
                                       avg([m.r for m in ms]), sum(m.n for m in ms),
                                       sum(m.rmsre_excluded for m in ms))
        return EvalRow("average", metrics, sum(r.n_test for r in self.rows))

    def table_rows(self) -> list[EvalRow]:
        if self.scope == "per-subject":
            return [*self.rows, self.average()]
        return list(self.rows)


# --------------------------------------------------------------------------
# contributions

def feature_contributions(W, beta) -> np.ndarray:
    """Per-feature contribution: loading matrix times regression coefficients."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    beta = np.asarray(beta, dtype=float)
    if W.shape[1] != beta.shape[0]:
        raise ValueError(f"W has {W.shape[1]} components but beta has {beta.shape[0]}")
    return W @ beta


def signal_contributions(gamma, column_signals, signal_order=None) -> dict[str, float]:
    """Sum per-feature contributions over the features of each signal."""
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape[0] != len(column_signals):
        raise ValueError("every feature column needs exactly one signal")
    order = list(signal_order) if signal_order is not None else list(dict.fromkeys(column_signals))
    unknown = set(column_signals) - set(order)
    if unknown:
        raise ValueError(f"columns mapped to unlisted signals: {sorted(unknown)}")
    out = {s: 0.0 for s in order}
    for g, s in zip(gamma.tolist(), column_signals):
        out[s] += g
    return out


@dataclass
class ContributionReport:
    """``gamma[target]`` per feature column; ``Gamma[target]`` per signal."""

    columns: list
    column_signals: list
    gamma: dict
    Gamma: dict
    label: str = "pooled"


def contributions(pipeline, label: str | None = None) -> ContributionReport:
    gamma, Gamma = {}, {}
    coef = np.asarray(pipeline.regression.coef).reshape(pipeline.pca.n_components, -1)
    for j, t in enumerate(pipeline.targets):
        g = feature_contributions(pipeline.pca.W, coef[:, j])
        gamma[t] = g
        Gamma[t] = signal_contributions(g, pipeline.column_signals)
    return ContributionReport(list(pipeline.columns), list(pipeline.column_signals), gamma, Gamma,
                              label or pipeline.scope)


def mean_contributions(reports, label: str = "per-subject mean") -> ContributionReport:
    first = reports[0]
    gamma = {t: np.mean([r.gamma[t] for r in reports], axis=0) for t in first.gamma}
    Gamma = {t: signal_contributions(gamma[t], first.column_signals) for t in gamma}
    return ContributionReport(first.columns, first.column_signals, gamma, Gamma, label)


# --------------------------------------------------------------------------
# export

def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def metrics_header() -> list[str]:
    cols = ["method", "scope", "unit"]
    for t in TARGETS:
        s = TARGET_SHORT[t]
        cols += [f"{s}_mae", f"{s}_rmsre", f"{s}_r"]
    return cols + ["n_test", "rmsre_excluded", "skipped_windows"]


def metrics_rows(report: EvalReport) -> list[list[str]]:
    out = []
    for row in report.table_rows():
        vals = [report.method, report.scope, row.unit]
        for t in TARGETS:
            m = row.metrics[t]
            vals += [_fmt(m.mae), _fmt(m.rmsre), _fmt(m.r)]
        excluded = sum(row.metrics[t].rmsre_excluded for t in TARGETS)
        vals += [str(row.n_test), str(excluded), str(report.skipped_windows)]
        out.append(vals)
    return out


def _write_csv(path: Path, header, rows, comments=()) -> None:
    with path.open("w", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def export_report(report: EvalReport, contribs, predictions, out_dir, *, config_echo=(),
                  svg: bool = True) -> list[Path]:
    """Write metrics, scatter and contribution CSVs (plus SVG renderings).

    ``predictions`` maps target -> (actual, predicted) arrays over the test
    rows. ``contribs`` is a list of :class:`ContributionReport` that share a
    schema; each becomes one column of ``contributions_<target>.csv``.
    Nothing is written unless every input is valid.
    """
    if not report.rows or any(r.n_test == 0 for r in report.rows):
        raise DataError("evaluation has an empty test set; nothing exported")
    for t in TARGETS:
        a, p = predictions[t]
        if len(a) == 0 or len(a) != len(p):
            raise DataError(f"scatter data for {t} is empty or misaligned")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc}") from None

    written = []
    path = out / f"metrics_{report.scope}.csv"
    _write_csv(path, metrics_header(), metrics_rows(report), config_echo)
    written.append(path)

    for t in TARGETS:
        s = TARGET_SHORT[t]
        a, p = predictions[t]
        path = out / f"scatter_{s}.csv"
        _write_csv(path, ["actual", "predicted"], [[_fmt(float(x)), _fmt(float(y))] for x, y in zip(a, p)],
                   config_echo)
        written.append(path)
        if svg:
            written.append(write_svg(out / f"scatter_{s}.svg", scatter_svg(a, p, f"{s}: estimated vs actual (g)")))

    if contribs:
        signals = list(contribs[0].Gamma[TARGETS[0]].keys())
        for t in TARGETS:
            s = TARGET_SHORT[t]
            path = out / f"contributions_{s}.csv"
            rows = [[sig, *(_fmt(float(c.Gamma[t][sig])) for c in contribs)] for sig in signals]
            _write_csv(path, ["signal", *(c.label for c in contribs)], rows, config_echo)
            written.append(path)
            path = out / f"feature_contributions_{s}.csv"
            frows = [[col, sig, *(_fmt(float(c.gamma[t][i])) for c in contribs)]
                     for i, (col, sig) in enumerate(zip(contribs[0].columns, contribs[0].column_signals))]
            _write_csv(path, ["column", "signal", *(c.label for c in contribs)], frows, config_echo)
            written.append(path)
            if svg:
                vals = [float(contribs[0].Gamma[t][sig]) for sig in signals]
                written.append(write_svg(out / f"contributions_{s}.svg",
                                         bar_svg(signals, vals, f"{s}: signal contributions ({contribs[0].label})")))
    return written


def comparison_header() -> list[str]:
    cols = ["method", "scope"]
    for t in TARGETS:
        s = TARGET_SHORT[t]
        cols += [f"{s}_mae", f"{s}_rmsre", f"{s}_r"]
    return cols + ["n_test"]


def write_comparison(path, reports, config_echo=()) -> Path:
    """One row per method with MAE, RMSRE and r for every target.

    Per-subject reports contribute their average row.
    """
    rows = []
    for rep in reports:
        summary = rep.table_rows()[-1]
        vals = [rep.method, rep.scope]
        for t in TARGETS:
            m = summary.metrics[t]
            vals += [_fmt(m.mae), _fmt(m.rmsre), _fmt(m.r)]
        rows.append(vals + [str(summary.n_test)])
    path = Path(path)
    _write_csv(path, comparison_header(), rows, config_echo)
    return path


# --------------------------------------------------------------------------
# minimal deterministic SVG

_W, _H, _PAD = 420, 320, 48


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _svg(body: list[str], title: str) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
            f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="11">')
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>',
                      f'<text x="{_W / 2:.1f}" y="18" text-anchor="middle">{_esc(title)}</text>',
                      *body, "</svg>", ""])


def scatter_svg(actual, predicted, title: str) -> str:
    a = np.asarray(actual, dtype=float)
    p = np.asarray(predicted, dtype=float)
    lo = float(min(a.min(), p.min(), 0.0))
    hi = float(max(a.max(), p.max()))
    hi = hi if hi > lo else lo + 1.0
    span_x, span_y = _W - 2 * _PAD, _H - 2 * _PAD

    def sx(v):
        return _PAD + (v - lo) / (hi - lo) * span_x

    def sy(v):
        return _H - _PAD - (v - lo) / (hi - lo) * span_y

    body = [
        f'<line x1="{_PAD}" y1="{_H - _PAD}" x2="{_W - _PAD}" y2="{_H - _PAD}" stroke="black"/>',
        f'<line x1="{_PAD}" y1="{_PAD}" x2="{_PAD}" y2="{_H - _PAD}" stroke="black"/>',
        f'<line x1="{sx(lo):.2f}" y1="{sy(lo):.2f}" x2="{sx(hi):.2f}" y2="{sy(hi):.2f}" '
        'stroke="gray" stroke-dasharray="4 3"/>',
        f'<text x="{_W / 2:.1f}" y="{_H - 12}" text-anchor="middle">actual</text>',
        f'<text x="14" y="{_H / 2:.1f}" transform="rotate(-90 14 {_H / 2:.1f})" '
        'text-anchor="middle">predicted</text>',
        f'<text x="{_PAD}" y="{_H - _PAD + 14}" text-anchor="middle">{lo:.0f}</text>',
        f'<text x="{_W - _PAD}" y="{_H - _PAD + 14}" text-anchor="middle">{hi:.0f}</text>',
    ]
    body += [f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="steelblue" fill-opacity="0.7"/>'
             for x, y in zip(a.tolist(), p.tolist())]
    return _svg(body, title)


def bar_svg(labels, values, title: str) -> str:
    v = np.asarray(values, dtype=float)
    top = float(max(v.max(), 0.0))
    bottom = float(min(v.min(), 0.0))
    if top == bottom:
        top = bottom + 1.0
    span_y = _H - 2 * _PAD
    slot = (_W - 2 * _PAD) / max(len(labels), 1)

    def sy(val):
        return _PAD + (top - val) / (top - bottom) * span_y

    zero = sy(0.0)
    body = [f'<line x1="{_PAD}" y1="{zero:.2f}" x2="{_W - _PAD}" y2="{zero:.2f}" stroke="black"/>']
    for i, (label, val) in enumerate(zip(labels, v.tolist())):
        x = _PAD + i * slot + 0.15 * slot
        y0, y1 = sorted((zero, sy(val)))
        color = "steelblue" if val >= 0 else "indianred"
        body.append(f'<rect x="{x:.2f}" y="{y0:.2f}" width="{0.7 * slot:.2f}" height="{y1 - y0:.2f}" fill="{color}"/>')
        body.append(f'<text x="{x + 0.35 * slot:.2f}" y="{_H - _PAD + 14}" text-anchor="middle">{_esc(str(label))}</text>')
        body.append(f'<text x="{x + 0.35 * slot:.2f}" y="{y0 - 3:.2f}" text-anchor="middle">{val:.3g}</text>')
    return _svg(body, title)


def write_svg(path, text: str) -> Path:
    path = Path(path)
    path.write_text(text)
    return path
