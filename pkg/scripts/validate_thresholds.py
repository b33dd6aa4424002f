"""Sanity-check the synthetic end-to-end thresholds without the pipeline.

Regresses carbohydrate grams on the 90-minute post-meal glucose AUC computed
straight from the raw 5-minute CGM trace (no resampling, features or PCA),
using the same 80/20 shuffle. If this direct route cannot reach r >= 0.8 and
MAE <= 15 % of mean carbs, the pipeline thresholds are not meaningful.

    python scripts/validate_thresholds.py [--seed 0] [--subjects 12]
"""

import argparse

import numpy as np

from mealmeter.signals import ChannelKind
from mealmeter.synthgen import SynthConfig, simulate, simulate_day, zero_gain


def glucose_auc_table(config):
    ds = simulate(config)
    auc, carbs = [], []
    for s in range(config.n_subjects):
        rows = [r for r in ds.ground_truth if r.meal.subject_id == ds.subject_ids[s]]
        for d in range(config.days_per_subject):
            day_rows = [r for r in rows if r.day == d]
            bgl = simulate_day(config, s, d, day_rows)[ChannelKind.BGL]
            t, g = bgl.times(), bgl.values
            for r in day_rows:
                t0 = r.meal.timestamp
                post = (t >= t0) & (t <= t0 + 5400)
                pre = (t >= t0 - 5400) & (t < t0)
                base = g[pre].min() if pre.any() else g[post][0]
                auc.append(np.trapezoid(g[post] - base, t[post]))
                carbs.append(r.meal.carbs_g)
    return np.array(auc), np.array(carbs)


def direct_regression(auc, carbs, seed):
    n = carbs.size
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(np.ceil(0.8 * n))
    tr, te = order[:n_train], order[n_train:]
    A = np.column_stack([np.ones(n_train), auc[tr]])
    coef = np.linalg.solve(A.T @ A, A.T @ carbs[tr])
    pred = coef[0] + coef[1] * auc[te]
    mae = np.mean(np.abs(pred - carbs[te]))
    r = np.corrcoef(pred, carbs[te])[0, 1]
    return r, mae, carbs[te].mean()


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--subjects", type=int, default=12)
    args = ap.parse_args()
    config = SynthConfig(n_subjects=args.subjects, seed=args.seed, emit_bvp=False)
    for label, cfg in (("default gains", config),
                       ("glucose gain only", zero_gain(config, keep=("glucose_per_carb_g",))),
                       ("all gains zero", zero_gain(config))):
        auc, carbs = glucose_auc_table(cfg)
        r, mae, mean = direct_regression(auc, carbs, args.seed)
        print(f"{label:18s} n={carbs.size} r={r:.3f} MAE={mae:.2f} g "
              f"({100 * mae / mean:.1f}% of mean {mean:.1f} g)")


if __name__ == "__main__":
    main()
