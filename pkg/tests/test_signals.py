import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mealmeter.errors import ParseError, ValidationError
from mealmeter.signals import (
    ChannelKind,
    MealEvent,
    TimeSeries,
    format_timestamp,
    parse_cgm_csv,
    parse_meal_log,
    parse_timestamp,
    parse_wristband_csv,
    write_cgm_csv,
    write_meal_log,
    write_wristband_csv,
)

T0 = 1_700_000_000.0


def _write(path, text):
    path.write_text(text)
    return path


class TestWristband:
    def test_header_and_body(self, tmp_path):
        ts = parse_wristband_csv(_write(tmp_path / "EDA.csv", "1700000000.0\n4.0\n0.1\n0.2\n"), "EDA")
        assert ts.kind is ChannelKind.EDA
        assert ts.start == 1_700_000_000 and ts.rate == 4
        assert ts.values.tolist() == [0.1, 0.2]

    def test_nan_names_line(self, tmp_path):
        with pytest.raises(ParseError) as exc:
            parse_wristband_csv(_write(tmp_path / "HR.csv", "0\n1\n70\nNaN\n"), "HR")
        assert exc.value.line == 4
        assert "line 4" in str(exc.value)

    def test_non_numeric_sample(self, tmp_path):
        with pytest.raises(ParseError) as exc:
            parse_wristband_csv(_write(tmp_path / "HR.csv", "0\n1\n70\n71\nabc\n"), "HR")
        assert exc.value.line == 5

    @pytest.mark.parametrize("text,line", [("x\n4\n1\n", 1), ("0\nfast\n1\n", 2), ("0\n4\n", 3), ("0\n0\n1\n", 2)])
    def test_bad_headers_and_empty_body(self, tmp_path, text, line):
        with pytest.raises(ParseError) as exc:
            parse_wristband_csv(_write(tmp_path / "EDA.csv", text), "EDA")
        assert exc.value.line == line

    def test_bvp_time_base(self, tmp_path):
        body = "\n".join(["0.5"] * 640)
        ts = parse_wristband_csv(_write(tmp_path / "BVP.csv", f"{T0}\n64\n{body}\n"), "BVP")
        assert ts.duration == 10.0
        assert ts.end == T0 + 639 / 64

    def test_e4_style_multi_column_header(self, tmp_path):
        ts = parse_wristband_csv(_write(tmp_path / "ACC_X.csv", f"{T0},{T0},{T0}\n32,32,32\n1\n2\n"), "ACC_X")
        assert ts.rate == 32

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=50))
    def test_round_trip(self, tmp_path_factory, values):
        path = tmp_path_factory.mktemp("rt") / "TEMP.csv"
        ts = TimeSeries(ChannelKind.TEMP, T0, 4.0, values)
        write_wristband_csv(path, ts)
        back = parse_wristband_csv(path, "TEMP")
        assert back.start == ts.start and back.rate == ts.rate
        assert np.array_equal(back.values, ts.values)


class TestCgm:
    def _cgm(self, tmp_path, pairs):
        rows = ["timestamp,glucose_mg_dl"] + [f"{format_timestamp(T0 + t)},{g}" for t, g in pairs]
        return _write(tmp_path / "CGM.csv", "\n".join(rows) + "\n")

    def test_no_gaps(self, tmp_path):
        ts = parse_cgm_csv(self._cgm(tmp_path, [(0, 100), (300, 110), (600, 120)]))
        assert ts.values.tolist() == [100, 110, 120]
        assert ts.rate == 1 / 300 and ts.start == T0

    def test_gap_interpolated(self, tmp_path):
        ts = parse_cgm_csv(self._cgm(tmp_path, [(0, 100), (600, 120)]))
        assert ts.values.tolist() == [100, 110, 120]

    def test_two_missing_allowed(self, tmp_path):
        ts = parse_cgm_csv(self._cgm(tmp_path, [(0, 100), (900, 130)]))
        assert ts.values.tolist() == [100, 110, 120, 130]

    def test_large_gap(self, tmp_path):
        with pytest.raises(ParseError, match="gap"):
            parse_cgm_csv(self._cgm(tmp_path, [(0, 100), (1500, 120)]))

    def test_jitter_snaps_to_grid(self, tmp_path):
        ts = parse_cgm_csv(self._cgm(tmp_path, [(0, 100), (302, 110), (597, 120)]))
        assert ts.values.tolist() == [100, 110, 120]

    def test_out_of_order(self, tmp_path):
        with pytest.raises(ParseError, match="increasing"):
            parse_cgm_csv(self._cgm(tmp_path, [(0, 100), (600, 120), (300, 110)]))

    def test_round_trip(self, tmp_path):
        ts = TimeSeries(ChannelKind.BGL, T0, 1 / 300, [90.5, 91.25, 140.0])
        write_cgm_csv(tmp_path / "CGM.csv", ts)
        back = parse_cgm_csv(tmp_path / "CGM.csv")
        assert back.start == T0 and np.array_equal(back.values, ts.values)


class TestMealLog:
    HEADER = "subject_id,timestamp,carbs_g,protein_g,fat_g,label\n"

    def test_one_row(self, tmp_path):
        meals = parse_meal_log(_write(tmp_path / "m.csv", self.HEADER + "S01,2024-03-04T08:30:00Z,60,20,10,meal\n"))
        assert meals == [MealEvent("S01", parse_timestamp("2024-03-04T08:30:00Z"), 60, 20, 10, "meal")]

    def test_negative(self, tmp_path):
        with pytest.raises(ValidationError):
            parse_meal_log(_write(tmp_path / "m.csv", self.HEADER + "S01,2024-03-04T08:30:00Z,-5,20,10,meal\n"))

    def test_sorted(self, tmp_path):
        text = self.HEADER + ("S02,2024-03-04T08:30:00Z,1,1,1,meal\n"
                              "S01,2024-03-04T12:30:00Z,2,2,2,meal\n"
                              "S01,2024-03-04T08:30:00Z,3,3,3,snack\n")
        meals = parse_meal_log(_write(tmp_path / "m.csv", text))
        assert [(m.subject_id, m.carbs_g) for m in meals] == [("S01", 3), ("S01", 2), ("S02", 1)]

    def test_duplicate(self, tmp_path):
        row = "S01,2024-03-04T08:30:00Z,1,1,1,meal\n"
        with pytest.raises(ValidationError, match="duplicate"):
            parse_meal_log(_write(tmp_path / "m.csv", self.HEADER + row + row))

    def test_round_trip(self, tmp_path):
        meals = [MealEvent("S01", T0, 61.3, 20.1, 9.9, "meal"), MealEvent("S01", T0 + 7200, 30, 5, 5, "snack")]
        write_meal_log(tmp_path / "m.csv", meals)
        assert parse_meal_log(tmp_path / "m.csv") == meals


class TestTypes:
    def test_time_series_rejects_nan(self):
        with pytest.raises(ValidationError):
            TimeSeries(ChannelKind.HR, 0, 1, [1.0, float("nan")])

    def test_time_series_immutable(self):
        ts = TimeSeries(ChannelKind.HR, 0, 1, [1.0, 2.0])
        with pytest.raises(ValueError):
            ts.values[0] = 5

    def test_meal_needs_some_mass(self):
        with pytest.raises(ValidationError):
            MealEvent("S01", T0, 0, 0, 0)

    def test_timestamp_forms_agree(self):
        assert parse_timestamp("2024-03-04T08:30:00Z") == parse_timestamp("2024-03-04T08:30:00")
        assert parse_timestamp(format_timestamp(T0 + 0.5)) == T0 + 0.5
