"""``mealmeter`` command line.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import analysis
from .analysis import TARGET_SHORT, export_report, write_comparison
from .config import METHODS, SCOPES, RunConfig, resolve
from .errors import ConfigError, DataError, MealMeterError
from .features import TARGETS, read_feature_csv, write_feature_csv
from .model import fit_pipeline, load_pipeline, predict, save_pipeline, split_train_test
from .signals import format_timestamp
from .synthgen import SynthConfig, simulate, write_dataset
from .workflow import StageError, evaluate, featurize_dataset, stage

log = logging.getLogger("mealmeter")


# --------------------------------------------------------------------------
# helpers

def _config(args, **extra) -> RunConfig:
    overrides = {
        "data": getattr(args, "data", None),
        "out": getattr(args, "out", None),
        "seed": getattr(args, "seed", None),
        "scope": getattr(args, "scope", None),
        "method": getattr(args, "method", None),
    }
    overrides.update(extra)
    return resolve(getattr(args, "config", None), overrides)


def _write_predictions(path: Path, keys, actual, raw, clamped) -> None:
    header = ["subject_id", "timestamp"]
    for t in TARGETS:
        s = TARGET_SHORT[t]
        header += [f"{s}_actual", f"{s}_raw", f"{s}_pred"]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, key in enumerate(keys):
            row = [key[0], format_timestamp(key[1])]
            for j in range(len(TARGETS)):
                a = "" if actual is None else repr(float(actual[i, j]))
                row += [a, repr(float(raw[i, j])), repr(float(clamped[i, j]))]
            w.writerow(row)


def _model_name(unit: str) -> str:
    return f"model_{unit}.json"


def _save_models(models: dict, out: Path) -> list[Path]:
    """Write every artifact to a scratch dir first, then move into place."""
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    with tempfile.TemporaryDirectory(dir=out) as tmp:
        for unit, model in models.items():
            save_pipeline(model, Path(tmp) / _model_name(unit))
        for unit in models:
            dest = out / _model_name(unit)
            shutil.move(str(Path(tmp) / _model_name(unit)), dest)
            paths.append(dest)
    return paths


def _print_table(report) -> None:
    header = analysis.metrics_header()
    print("  ".join(header))
    for row in analysis.metrics_rows(report):
        print("  ".join(v if len(v) < 12 else f"{float(v):.4g}" for v in row))


def _load_features(args, config: RunConfig):
    if getattr(args, "features", None):
        with stage("featurize"):
            fm = read_feature_csv(args.features)
        is_huo = all("_GAUSS_AUC_" in c for c in fm.columns)
        if is_huo != (config.method == "huo"):
            want = "features_huo.csv" if config.method == "huo" else "features.csv"
            raise ConfigError(f"{args.features} does not match --method {config.method}; pass {want}")
        return fm, 0
    with stage("featurize"):
        feats = featurize_dataset(config.data, config)
    fm = feats.huo if config.method == "huo" else feats.features
    return fm, len(feats.skipped)


# --------------------------------------------------------------------------
# commands

def cmd_simulate(args) -> int:
    config = _config(args, n_subjects=args.subjects, days_per_subject=args.days,
                     emit_bvp=False if args.no_bvp else None)
    synth = SynthConfig(n_subjects=config.n_subjects, days_per_subject=config.days_per_subject,
                        emit_bvp=config.emit_bvp, seed=config.seed)
    with stage("simulate"):
        ds = simulate(synth)
        write_dataset(ds, config.out)
    print(f"simulated {config.n_subjects} subjects x {config.days_per_subject} days, "
          f"{len(ds.meals)} meals -> {config.out}")
    return 0


def cmd_ingest(args) -> int:
    config = _config(args)
    with stage("ingest"):
        feats = featurize_dataset(config.data, config)
    n = len(feats.features)
    print(f"ingested {len(feats.features.subjects)} subjects: {n} meal windows, "
          f"{len(feats.skipped)} skipped")
    for s in feats.skipped:
        print(f"  skipped {s.meal.subject_id} @ {format_timestamp(s.meal.timestamp)}: {s.reason}")
    return 0


def cmd_featurize(args) -> int:
    config = _config(args)
    with stage("featurize"):
        feats = featurize_dataset(config.data, config)
    out = Path(config.out)
    with stage("export"):
        out.mkdir(parents=True, exist_ok=True)
        write_feature_csv(out / "features.csv", feats.features)
        write_feature_csv(out / "features_huo.csv", feats.huo)
    print(f"{len(feats.features)} rows x {len(feats.features.columns)} features -> {out / 'features.csv'}; "
          f"{len(feats.skipped)} windows skipped")
    return 0


def cmd_train(args) -> int:
    config = _config(args)
    if config.method != "mealmeter":
        raise ConfigError("train persists MealMeter pipelines only; use `evaluate --method huo`")
    fm, _ = _load_features(args, config)
    units = [("pooled", fm)] if config.scope == "pooled" else [(s, fm.for_subject(s)) for s in fm.subjects]
    models, split_rows = {}, []
    for unit, rows in units:
        with stage("split"):
            train, test = split_train_test(rows, config.split_ratio, config.seed)
        with stage("fit"):
            models[unit] = fit_pipeline(train, config.n_components, scope=config.scope,
                                        subject_id=None if unit == "pooled" else unit,
                                        split_seed=config.seed, config=config.as_dict())
        split_rows += [[unit, k[0], format_timestamp(k[1]), "train"] for k in train.keys]
        split_rows += [[unit, k[0], format_timestamp(k[1]), "test"] for k in test.keys]
    out = Path(config.out)
    with stage("export"):
        paths = _save_models(models, out)
        with (out / "split.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["unit", "subject_id", "timestamp", "partition"])
            w.writerows(split_rows)
    print(f"trained {len(paths)} pipeline(s) -> {out}")
    return 0


def cmd_predict(args) -> int:
    with stage("predict"):
        pipeline = load_pipeline(args.model)
        fm = read_feature_csv(args.features)
        pred = predict(pipeline, fm)
    out = Path(args.out)
    with stage("export"):
        out.parent.mkdir(parents=True, exist_ok=True)
        _write_predictions(out, fm.keys, fm.Y if not args.no_actual else None, pred.raw, pred.clamped)
    print(f"{len(fm)} predictions -> {out} ({int(pred.was_clamped.sum())} clamped at 0 g)")
    return 0


def cmd_evaluate(args) -> int:
    config = _config(args)
    fm, skipped = _load_features(args, config)
    with stage("evaluate"):
        ev = evaluate(fm, config, skipped=skipped)
    with stage("export"):
        export_report(ev.report, ev.contributions, ev.scatter(), config.out,
                      config_echo=config.echo(), svg=config.svg)
        _write_predictions(Path(config.out) / f"predictions_{config.method}.csv",
                           ev.test_keys, ev.actual, ev.raw, ev.predicted)
    _print_table(ev.report)
    return 0


def cmd_contributions(args) -> int:
    with stage("contributions"):
        models = [load_pipeline(p) for p in args.model]
        reports = [analysis.contributions(m, m.subject_id or m.scope) for m in models]
        if len(reports) > 1:
            reports = [analysis.mean_contributions(reports, "per_subject_mean"), *reports]
    out = Path(args.out)
    with stage("export"):
        out.mkdir(parents=True, exist_ok=True)
        for t in TARGETS:
            s = TARGET_SHORT[t]
            signals = list(reports[0].Gamma[t])
            with (out / f"contributions_{s}.csv").open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["signal", *(r.label for r in reports)])
                for sig in signals:
                    w.writerow([sig, *(repr(float(r.Gamma[t][sig])) for r in reports)])
    for t in TARGETS:
        ranked = sorted(reports[0].Gamma[t].items(), key=lambda kv: -kv[1])
        print(f"{TARGET_SHORT[t]:8s} " + "  ".join(f"{k}={v:+.3f}" for k, v in ranked))
    return 0


def _read_plot_csv(path: Path):
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    return rows[0], rows[1:]


def cmd_report(args) -> int:
    out = Path(args.out)
    if not out.is_dir():
        raise DataError(f"report directory {out} does not exist")
    n = 0
    with stage("report"):
        for t in TARGETS:
            s = TARGET_SHORT[t]
            scatter = out / f"scatter_{s}.csv"
            if scatter.exists():
                _, rows = _read_plot_csv(scatter)
                a = np.array([float(r[0]) for r in rows])
                p = np.array([float(r[1]) for r in rows])
                analysis.write_svg(out / f"scatter_{s}.svg", analysis.scatter_svg(a, p, f"{s}: estimated vs actual (g)"))
                n += 1
            contrib = out / f"contributions_{s}.csv"
            if contrib.exists():
                header, rows = _read_plot_csv(contrib)
                analysis.write_svg(out / f"contributions_{s}.svg", analysis.bar_svg(
                    [r[0] for r in rows], [float(r[1]) for r in rows], f"{s}: signal contributions ({header[1]})"))
                n += 1
        for metrics in sorted(out.glob("metrics_*.csv")):
            print(metrics.read_text(), end="")
    print(f"rendered {n} SVG file(s) in {out}")
    return 0


def cmd_run(args) -> int:
    config = _config(args)
    out = Path(config.out)
    with stage("featurize"):
        feats = featurize_dataset(config.data, config)
    log.info("featurized %d windows (%d skipped)", len(feats.features), len(feats.skipped))
    skipped = len(feats.skipped)
    evaluations = {}
    for method in METHODS:
        fm = feats.huo if method == "huo" else feats.features
        with stage(f"evaluate:{method}"):
            evaluations[method] = evaluate(fm, config, method=method, skipped=skipped)
    main = evaluations[config.method]
    with stage("export"):
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.ini").write_text(config.to_ini())
        write_feature_csv(out / "features.csv", feats.features)
        write_feature_csv(out / "features_huo.csv", feats.huo)
        export_report(main.report, main.contributions, main.scatter(), out,
                      config_echo=config.echo(), svg=config.svg)
        if config.method != "mealmeter":
            mm = evaluations["mealmeter"]
            export_report(mm.report, mm.contributions, mm.scatter(), out / "mealmeter",
                          config_echo=config.echo(), svg=config.svg)
        write_comparison(out / "comparison.csv", [evaluations[m].report for m in METHODS], config.echo())
        for method, ev in evaluations.items():
            _write_predictions(out / f"predictions_{method}.csv", ev.test_keys, ev.actual, ev.raw, ev.predicted)
        _save_models(evaluations["mealmeter"].models, out / "models")
    _print_table(main.report)
    return 0


# --------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file; flags override it")
    common.add_argument("--seed", type=int)
    common.add_argument("--scope", choices=SCOPES)
    common.add_argument("--method", choices=METHODS)
    common.add_argument("--out", help="output directory")
    common.add_argument("-q", "--quiet", action="store_true")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", help="dataset directory (meals.csv + <subject>/<day>/*.csv)")

    p = argparse.ArgumentParser(prog="mealmeter", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="write a synthetic dataset")
    s.add_argument("--subjects", type=int)
    s.add_argument("--days", type=int)
    s.add_argument("--no-bvp", action="store_true", help="skip the 64 Hz BVP channel")
    s.set_defaults(func=cmd_simulate)

    sub.add_parser("ingest", parents=[common, data], help="validate a dataset and cut meal windows"
                   ).set_defaults(func=cmd_ingest)
    sub.add_parser("featurize", parents=[common, data], help="write the feature matrix CSVs"
                   ).set_defaults(func=cmd_featurize)

    for name, func, text in (("train", cmd_train, "fit and save pipelines"),
                             ("evaluate", cmd_evaluate, "split, fit, predict and write reports")):
        sp = sub.add_parser(name, parents=[common, data], help=text)
        sp.add_argument("--features", help="feature CSV (instead of --data)")
        sp.set_defaults(func=func)

    sp = sub.add_parser("predict", parents=[common], help="apply a saved pipeline")
    sp.add_argument("--model", required=True)
    sp.add_argument("--features", required=True)
    sp.add_argument("--no-actual", action="store_true", help="omit the target columns")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("contributions", parents=[common], help="signal contributions of saved pipelines")
    sp.add_argument("--model", required=True, nargs="+")
    sp.set_defaults(func=cmd_contributions)

    sub.add_parser("report", parents=[common], help="re-render SVGs from report CSVs"
                   ).set_defaults(func=cmd_report)
    sub.add_parser("run", parents=[common, data], help="the whole pipeline end to end"
                   ).set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command in ("predict", "contributions", "report") and not args.out:
        parser.error(f"{args.command} needs --out")
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except MealMeterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
