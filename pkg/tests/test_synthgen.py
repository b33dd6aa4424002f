import hashlib
import warnings
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mealmeter.errors import ConfigError
from mealmeter.preprocess import extract_meal_windows
from mealmeter.signals import ChannelKind, load_subject, parse_meal_log
from mealmeter.synthgen import (
    KCAL_PER_GRAM,
    SynthConfig,
    glucose_excursion,
    simulate,
    simulate_day,
    write_dataset,
    zero_gain,
)

SMALL = SynthConfig(n_subjects=2, days_per_subject=2, emit_bvp=False)
K = ChannelKind


def test_default_counts():
    ds = simulate(SynthConfig())
    assert len(ds.meals) == 180
    assert ds.subject_ids == [f"S{i:02d}" for i in range(1, 13)]
    for sid in ds.subject_ids:
        assert sum(m.subject_id == sid for m in ds.meals) == 15


def test_macros_floor_and_split():
    ds = simulate(SynthConfig())
    grams = np.array([m.targets for m in ds.meals])
    assert grams.min() >= 5.0
    kcal = grams * KCAL_PER_GRAM
    share = kcal.sum(axis=0) / kcal.sum()
    assert np.allclose(share, [0.55, 0.20, 0.25], atol=0.03)


@pytest.mark.parametrize("bad", [
    dict(schedule=(("19:00", "meal"),)),
    dict(macro_split=(0.5, 0.2, 0.2)),
    dict(n_subjects=0),
    dict(glucose_per_carb_g=float("inf")),
])
def test_invalid_config(bad):
    with pytest.raises(ConfigError):
        simulate(replace(SynthConfig(), **bad))


def test_channel_rates_and_span():
    ch = simulate_day(SMALL, 0, 0)
    assert ch[K.BGL].rate == 1 / 300
    assert ch[K.HR].rate == 1 and ch[K.EDA].rate == 4 and ch[K.TEMP].rate == 4 and ch[K.ACC_X].rate == 32
    start, stop = SMALL.session_bounds(0)
    for k in (K.HR, K.EDA, K.TEMP, K.ACC_X, K.ACC_Y, K.ACC_Z):
        assert ch[k].start == start and ch[k].end == pytest.approx(stop)
    assert ch[K.BGL].start == start - 120 * 60
    assert K.BVP not in ch


def test_bvp_when_enabled():
    ch = simulate_day(replace(SMALL, emit_bvp=True), 0, 0)
    assert ch[K.BVP].rate == 64 and len(ch[K.BVP]) == 10 * 3600 * 64 + 1


def test_null_channels_are_pure_baseline():
    cfg = replace(zero_gain(SMALL), noise_bgl=0, noise_hr=0, noise_eda=0, noise_temp=0, noise_acc=0)
    with_meals = simulate_day(cfg, 1, 0)
    without = simulate_day(cfg, 1, 0, rows=[])
    for k in with_meals:
        assert np.array_equal(with_meals[k].values, without[k].values), k
    assert np.ptp(with_meals[K.BGL].values) == 0 and np.ptp(with_meals[K.HR].values) == 0


def test_glucose_peak_closed_form():
    cfg = replace(SMALL, noise_bgl=0.0)
    ds = simulate(cfg)
    row = ds.ground_truth[0]
    r = row.response
    peak_t = row.meal.timestamp + r.glucose_delay
    assert glucose_excursion(peak_t, row.meal.timestamp, row.meal.carbs_g, cfg.glucose_per_carb_g,
                             r.glucose_delay, r.glucose_width) == row.glucose_peak
    assert row.glucose_peak == cfg.glucose_per_carb_g * row.meal.carbs_g
    # the simulated trace is baseline + the sum of excursions on the CGM grid
    day = [x for x in ds.ground_truth if x.meal.subject_id == "S01" and x.day == 0]
    bgl = simulate_day(cfg, 0, 0, day)[K.BGL]
    t = bgl.times()
    total = sum(glucose_excursion(t, x.meal.timestamp, x.meal.carbs_g, cfg.glucose_per_carb_g,
                                  x.response.glucose_delay, x.response.glucose_width) for x in day)
    base = bgl.values - total
    assert np.ptp(base) < 1e-9


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 1000))
def test_monotone_auc(seed):
    # timing fixed and meals 4 h apart so neighbouring excursions do not overlap
    cfg = SynthConfig(n_subjects=1, days_per_subject=1, emit_bvp=False, noise_bgl=0.0, seed=seed,
                      glucose_delay_min=(35.0, 35.0), glucose_width_min=(75.0, 75.0),
                      schedule=(("08:30", "meal"), ("12:30", "meal"), ("16:30", "meal")))
    ds = simulate(cfg)
    bgl = simulate_day(cfg, 0, 0, ds.ground_truth)[K.BGL]
    t, g = bgl.times(), bgl.values
    pairs = []
    for row in ds.ground_truth:
        m = (t >= row.meal.timestamp) & (t < row.meal.timestamp + 5400)
        pairs.append((row.meal.carbs_g, np.trapezoid(g[m] - g.min(), t[m])))
    pairs.sort()
    for (c1, a1), (c2, a2) in zip(pairs, pairs[1:]):
        if c2 > c1:
            assert a2 > a1


def _tree_hash(root):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def test_files_deterministic_and_reingest(tmp_path):
    cfg = replace(SMALL, n_subjects=1)
    a = write_dataset(simulate(cfg), tmp_path / "a")
    b = write_dataset(simulate(cfg), tmp_path / "b")
    assert _tree_hash(a) == _tree_hash(b)
    c = write_dataset(simulate(replace(cfg, seed=1)), tmp_path / "c")
    assert _tree_hash(a) != _tree_hash(c)

    meals = parse_meal_log(a / "meals.csv")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        record = load_subject(a, "S01", meals)
    assert len(record.days) == 2
    mem = simulate(cfg).record(0)
    for k, ts in mem.days[0].items():
        assert np.array_equal(record.days[0][k].values, ts.values), k
        assert record.days[0][k].start == ts.start
    windows, skipped = extract_meal_windows(record)
    assert len(windows) == 10 and not skipped


def test_subject_days_independent():
    # generating a subject alone matches the same subject inside a bigger study
    alone = simulate(replace(SMALL, n_subjects=1)).record(0)
    inside = simulate(replace(SMALL, n_subjects=2)).record(0)
    for a, b in zip(alone.days, inside.days):
        for k in a:
            assert np.array_equal(a[k].values, b[k].values)
