"""Dataset loading, cleaning and normalization contracts."""

import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hydrocast.dataset import (
    DYNAMIC_VARIABLES,
    StaticAttributeTable,
    TimeSeriesPanel,
    apply_normalization,
    encode_month_ordinal,
    fit_normalization,
    impute_static_means,
    invert_normalization,
    load_normalization_spec,
    load_static_csv,
    load_timeseries_csv,
    save_normalization_spec,
    slice_date_range,
    write_static_csv,
    write_timeseries_csv,
)
from hydrocast.errors import ConfigError, DataError

D0 = dt.date(2000, 1, 1)


def make_panel(cid="c1", T=30, start=D0, seed=0):
    rng = np.random.default_rng(seed)
    dates = tuple(start + dt.timedelta(days=k) for k in range(T))
    return TimeSeriesPanel(cid, dates, rng.uniform(-5, 50, size=(T, 6)))


def write_dynamic(path, panels):
    write_timeseries_csv(panels, path)
    return path


class TestLoadTimeseries:
    def test_two_catchments_ten_days(self, tmp_path):
        path = write_dynamic(tmp_path / "dyn.csv", [make_panel("a", 10), make_panel("b", 10, seed=1)])
        panels = load_timeseries_csv(path)
        assert [p.catchment_id for p in panels] == ["a", "b"]
        assert all(p.length == 10 for p in panels)

    def test_rows_sorted_by_date(self, tmp_path):
        path = tmp_path / "dyn.csv"
        lines = ["catchment_id,date,prcp,srad,tmax,tmin,vp,q"]
        for day in (3, 1, 2):
            lines.append(f"a,2000-01-0{day},1,2,3,4,5,{day}")
        path.write_text("\n".join(lines) + "\n")
        (panel,) = load_timeseries_csv(path)
        assert [d.day for d in panel.dates] == [1, 2, 3]
        assert list(panel.column("q")) == [1.0, 2.0, 3.0]

    def test_duplicated_date_names_the_date(self, tmp_path):
        path = tmp_path / "dyn.csv"
        path.write_text(
            "catchment_id,date,prcp,srad,tmax,tmin,vp,q\n"
            "a,2000-01-01,1,2,3,4,5,6\n"
            "a,2000-01-01,1,2,3,4,5,6\n"
        )
        with pytest.raises(DataError, match="2000-01-01"):
            load_timeseries_csv(path)

    def test_date_gap_names_the_gap(self, tmp_path):
        path = tmp_path / "dyn.csv"
        path.write_text(
            "catchment_id,date,prcp,srad,tmax,tmin,vp,q\n"
            "a,2000-01-01,1,2,3,4,5,6\n"
            "a,2000-01-03,1,2,3,4,5,6\n"
        )
        with pytest.raises(DataError, match="gap between 2000-01-01 and 2000-01-03"):
            load_timeseries_csv(path)

    def test_malformed_row_reports_line_number(self, tmp_path):
        path = tmp_path / "dyn.csv"
        path.write_text(
            "catchment_id,date,prcp,srad,tmax,tmin,vp,q\n"
            "a,2000-01-01,1,2,3,4,5,6\n"
            "a,2000-01-02,1,2,oops,4,5,6\n"
        )
        with pytest.raises(DataError, match=":3"):
            load_timeseries_csv(path)

    def test_missing_value_rejected(self, tmp_path):
        path = tmp_path / "dyn.csv"
        path.write_text(
            "catchment_id,date,prcp,srad,tmax,tmin,vp,q\na,2000-01-01,1,2,,4,5,6\n"
        )
        with pytest.raises(DataError, match="empty value"):
            load_timeseries_csv(path)

    def test_unknown_column_rejected(self, tmp_path):
        path = tmp_path / "dyn.csv"
        path.write_text("catchment_id,date,prcp,srad,tmax,tmin,vp,q,bonus\n")
        with pytest.raises(DataError, match="unknown column"):
            load_timeseries_csv(path)

    def test_missing_column_rejected(self, tmp_path):
        path = tmp_path / "dyn.csv"
        path.write_text("catchment_id,date,prcp,srad,tmax,tmin,vp\n")
        with pytest.raises(DataError, match="missing required column"):
            load_timeseries_csv(path)

    def test_schema_mapping(self, tmp_path):
        path = tmp_path / "dyn.csv"
        path.write_text(
            "basin,day,prcp,srad,tmax,tmin,vp,flow\nb1,2000-01-01,1,2,3,4,5,6\n"
        )
        (panel,) = load_timeseries_csv(
            path, schema={"catchment_id": "basin", "date": "day", "q": "flow"}
        )
        assert panel.catchment_id == "b1"
        assert panel.column("q")[0] == 6.0

    def test_many_catchments_counted(self, tmp_path):
        # structural stand-in for the full 671-location load
        panels = [make_panel(f"c{i:03d}", 3, seed=i) for i in range(671)]
        path = write_dynamic(tmp_path / "dyn.csv", panels)
        assert len(load_timeseries_csv(path)) == 671

    def test_writer_loader_round_trip(self, tmp_path):
        original = [make_panel("a", 12), make_panel("b", 12, seed=2)]
        path = write_dynamic(tmp_path / "dyn.csv", original)
        loaded = load_timeseries_csv(path)
        for before, after in zip(original, loaded):
            assert before.dates == after.dates
            np.testing.assert_array_equal(before.values, after.values)


class TestSliceDateRange:
    def test_study_interval_length(self):
        # 1989-10-02 .. 2008-12-31 spans exactly 7031 days
        start, end = dt.date(1989, 10, 2), dt.date(2008, 12, 31)
        assert (end - start).days + 1 == 7031
        panel = make_panel("a", 7200, start=dt.date(1989, 9, 1))
        sliced = slice_date_range(panel, start, end)
        assert sliced.length == 7031
        assert sliced.dates[0] == start and sliced.dates[-1] == end

    def test_single_day(self):
        panel = make_panel("a", 5)
        sliced = slice_date_range(panel, D0 + dt.timedelta(days=2), D0 + dt.timedelta(days=2))
        assert sliced.length == 1

    def test_start_after_end(self):
        panel = make_panel("a", 5)
        with pytest.raises(DataError, match="after end"):
            slice_date_range(panel, D0 + dt.timedelta(days=3), D0)

    def test_outside_span(self):
        panel = make_panel("a", 5)
        with pytest.raises(DataError, match="outside span"):
            slice_date_range(panel, D0 - dt.timedelta(days=1), D0)


class TestImputation:
    def make_table(self, values):
        values = np.asarray(values, dtype=np.float64)
        n = values.shape[0]
        return StaticAttributeTable(
            catchment_ids=tuple(f"c{i}" for i in range(n)),
            attribute_names=tuple(f"a{j}" for j in range(values.shape[1])),
            values=values,
            gauge_lat=np.linspace(30, 40, n),
            gauge_lon=np.linspace(-100, -90, n),
        )

    def test_mean_fills_missing(self):
        table = self.make_table([[1.0], [np.nan], [3.0]])
        out = impute_static_means(table)
        np.testing.assert_allclose(out.values[:, 0], [1.0, 2.0, 3.0])

    def test_complete_column_unchanged(self):
        table = self.make_table([[1.0, 5.0], [2.0, 6.0]])
        out = impute_static_means(table)
        np.testing.assert_array_equal(out.values, table.values)

    def test_all_missing_column_names_attribute(self):
        table = self.make_table([[np.nan], [np.nan]])
        with pytest.raises(DataError, match="a0"):
            impute_static_means(table)

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_imputation_preserves_column_means(self, seed):
        rng = np.random.default_rng(seed)
        values = rng.normal(size=(8, 4))
        mask = rng.random((8, 4)) < 0.4
        mask[0] = False  # keep at least one observed value per column
        values[mask] = np.nan
        table = self.make_table(values)
        out = impute_static_means(table)
        for j in range(4):
            observed = values[~np.isnan(values[:, j]), j]
            assert abs(out.values[:, j].mean() - observed.mean()) < 1e-12


class TestMonthEncoding:
    def test_boundaries_and_midpoint(self):
        dates = [dt.date(2001, 1, 15), dt.date(2001, 7, 1), dt.date(2001, 12, 31)]
        enc = encode_month_ordinal(dates)
        assert enc[0] == 0.0
        assert enc[2] == 1.0
        assert abs(enc[1] - 6 / 11) < 1e-15

    def test_monotonic_within_year(self):
        dates = [dt.date(2001, m, 1) for m in range(1, 13)]
        enc = encode_month_ordinal(dates)
        assert np.all(np.diff(enc) > 0)


class TestNormalization:
    def test_minmax_stats(self):
        panel = TimeSeriesPanel(
            "a",
            tuple(D0 + dt.timedelta(days=k) for k in range(3)),
            np.array([[0.0] * 6, [5.0] * 6, [10.0] * 6]),
        )
        spec = fit_normalization([panel])
        assert spec.dynamic_pairs()["prcp"] == (0.0, 10.0)

    def test_apply_examples(self):
        dates = tuple(D0 + dt.timedelta(days=k) for k in range(3))
        train = TimeSeriesPanel("a", dates, np.tile([[0.0], [5.0], [10.0]], (1, 6)))
        spec = fit_normalization([train])
        probe = TimeSeriesPanel("b", dates[:1], np.array([[5.0, 0.0, 12.0, 5.0, 5.0, 5.0]]))
        out = apply_normalization(spec, probe)
        assert out.values[0, 0] == 0.5
        assert out.values[0, 1] == 0.0  # training minimum maps to 0
        assert abs(out.values[0, 2] - 1.2) < 1e-15  # outside range, not clipped

    def test_degenerate_column_maps_to_zero(self):
        dates = tuple(D0 + dt.timedelta(days=k) for k in range(2))
        values = np.ones((2, 6))
        spec = fit_normalization([TimeSeriesPanel("a", dates, values)])
        out = apply_normalization(spec, TimeSeriesPanel("b", dates, values * 7))
        np.testing.assert_array_equal(out.values, np.zeros((2, 6)))
        back = invert_normalization(spec, out)
        np.testing.assert_array_equal(back.values, np.ones((2, 6)))

    def test_empty_training_set(self):
        with pytest.raises(DataError, match="empty"):
            fit_normalization([])

    def test_unknown_scheme(self):
        with pytest.raises(ConfigError, match="scheme"):
            fit_normalization([make_panel()], scheme="quantile")

    def test_static_column_mismatch(self):
        spec = fit_normalization([make_panel()])
        table = StaticAttributeTable(
            ("c0",), ("mystery",), np.array([[1.0]]), np.array([40.0]), np.array([-100.0])
        )
        with pytest.raises(DataError, match="mystery"):
            apply_normalization(spec, table)

    @pytest.mark.parametrize("scheme", ["minmax", "zscore"])
    @given(seed=st.integers(0, 2**31 - 1))
    @settings(max_examples=20, deadline=None)
    def test_round_trip_identity(self, scheme, seed):
        rng = np.random.default_rng(seed)
        panel = TimeSeriesPanel(
            "a",
            tuple(D0 + dt.timedelta(days=k) for k in range(20)),
            rng.uniform(-1000, 1000, size=(20, 6)),
        )
        spec = fit_normalization([panel], scheme=scheme)
        back = invert_normalization(spec, apply_normalization(spec, panel))
        scale = np.abs(panel.values).max()
        np.testing.assert_allclose(back.values, panel.values, rtol=1e-10, atol=1e-10 * scale)

    def test_pipeline_deterministic(self, tmp_path):
        rng = np.random.default_rng(5)
        values = rng.uniform(0, 10, size=(40, 6))
        mask_table = self.make_static_with_missing()

        def run():
            dates = tuple(D0 + dt.timedelta(days=k) for k in range(40))
            panel = TimeSeriesPanel("a", dates, values.copy())
            sliced = slice_date_range(panel, dates[5], dates[30])
            table = impute_static_means(mask_table)
            spec = fit_normalization([sliced], table)
            return apply_normalization(spec, sliced).values, apply_normalization(spec, table).values

        (v1, t1), (v2, t2) = run(), run()
        assert np.array_equal(v1, v2) and np.array_equal(t1, t2)

    @staticmethod
    def make_static_with_missing():
        return StaticAttributeTable(
            ("a", "b", "c"),
            ("x", "y"),
            np.array([[1.0, np.nan], [2.0, 4.0], [np.nan, 6.0]]),
            np.array([31.0, 35.0, 39.0]),
            np.array([-101.0, -95.0, -91.0]),
        )


class TestNormalizationSpecFile:
    def test_round_trip(self, tmp_path):
        table = impute_static_means(TestNormalization.make_static_with_missing())
        spec = fit_normalization([make_panel()], table)
        path = tmp_path / "norm.txt"
        save_normalization_spec(spec, path)
        loaded = load_normalization_spec(path)
        assert loaded == spec

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "norm.txt"
        path.write_text("what=ever\n")
        with pytest.raises(DataError):
            load_normalization_spec(path)


class TestStaticCsv:
    def test_round_trip_with_missing(self, tmp_path):
        table = TestNormalization.make_static_with_missing()
        path = tmp_path / "static.csv"
        write_static_csv(table, path)
        loaded = load_static_csv(path)
        assert loaded.catchment_ids == table.catchment_ids
        assert loaded.attribute_names == table.attribute_names
        np.testing.assert_array_equal(
            np.isnan(loaded.values), np.isnan(table.values)
        )
        np.testing.assert_allclose(
            loaded.values[~np.isnan(table.values)], table.values[~np.isnan(table.values)]
        )

    def test_duplicate_ids_rejected(self, tmp_path):
        path = tmp_path / "static.csv"
        path.write_text(
            "catchment_id,gauge_lat,gauge_lon,a\nc1,30,-100,1\nc1,31,-101,2\n"
        )
        with pytest.raises(DataError, match="duplicate"):
            load_static_csv(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "static.csv"
        path.write_text("id,lat,lon,a\nc1,30,-100,1\n")
        with pytest.raises(DataError, match="header"):
            load_static_csv(path)
