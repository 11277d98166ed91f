import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cropcast.errors import HistoryError, InputError, IntegrityError, ParseError
from cropcast.ingest import (
    Dataset,
    FieldKind,
    MarketingWeights,
    PublishedMya,
    RawInputRecord,
    forecast_weights,
    olympic_mean,
    parse_input_csv,
    parse_output_csv,
    read_normalized,
    validate_dataset,
    write_normalized,
)
from cropcast.timeseries import (
    Commodity,
    CommodityCalendar,
    MarketingYear,
    MonthStamp,
    marketing_year_window,
)

from fixtures import build_dataset, write_raw_input_csv, write_raw_output_csv


@pytest.fixture(scope="module")
def fixture_data():
    return build_dataset()


class TestParseInput:
    def test_happy_path_single_row(self, tmp_path):
        p = tmp_path / "in.csv"
        p.write_text(
            "commodity,year,month,field,value,vintage\n"
            "corn,2020,9,price_received,3.56,\n",
            encoding="utf-8",
        )
        records, report = parse_input_csv(p)
        assert report.ok and len(records) == 1
        r = records[0]
        assert r.commodity is Commodity.CORN
        assert r.stamp == MonthStamp(2020, 9)
        assert r.field_kind is FieldKind.PRICE_RECEIVED
        assert r.value == 3.56

    def test_empty_value_rejected_with_line(self, tmp_path):
        p = tmp_path / "in.csv"
        p.write_text(
            "commodity,year,month,field,value,vintage\n"
            "corn,2020,9,price_received,,\n"
            "corn,2020,10,price_received,3.60,\n",
            encoding="utf-8",
        )
        records, report = parse_input_csv(p)
        assert len(records) == 1
        assert report.rejected == [(2, "empty value cell")]

    def test_malformed_numeric_rejected_with_line(self, tmp_path):
        p = tmp_path / "in.csv"
        p.write_text(
            "commodity,year,month,field,value,vintage\n"
            "corn,2020,9,price_received,three,\n",
            encoding="utf-8",
        )
        records, report = parse_input_csv(p)
        assert not records
        assert report.rejected[0][0] == 2

    def test_unknown_commodity_counted(self, tmp_path):
        p = tmp_path / "in.csv"
        p.write_text(
            "commodity,year,month,field,value,vintage\n"
            "rice,2020,9,price_received,3.5,\n",
            encoding="utf-8",
        )
        records, report = parse_input_csv(p)
        assert not records
        assert "rice" in report.rejected[0][1]

    def test_unmapped_columns_counted(self, tmp_path):
        p = tmp_path / "in.csv"
        p.write_text(
            "commodity,year,month,field,value,vintage,extra\n"
            "corn,2020,9,price_received,3.5,,junk\n",
            encoding="utf-8",
        )
        _, report = parse_input_csv(p)
        assert report.ignored_columns == ("extra",)

    def test_missing_file(self):
        with pytest.raises(ParseError):
            parse_input_csv("/nonexistent/input.csv")

    def test_month_names_accepted(self, tmp_path):
        p = tmp_path / "in.csv"
        p.write_text(
            "commodity,year,month,field,value,vintage\n"
            "wheat,2019,Jun,price_received,5.1,\n",
            encoding="utf-8",
        )
        records, report = parse_input_csv(p)
        assert records[0].stamp == MonthStamp(2019, 6)

    def test_full_fixture_file(self, tmp_path, fixture_data):
        records, published, _ = fixture_data
        p = tmp_path / "inputdata.csv"
        write_raw_input_csv(p, records)
        parsed, report = parse_input_csv(p)
        assert report.ok
        assert len(parsed) == len(records)


class TestParseOutput:
    def test_fixture_roundtrip(self, tmp_path, fixture_data):
        _, published, _ = fixture_data
        p = tmp_path / "outputfc.csv"
        write_raw_output_csv(p, published)
        rows, report = parse_output_csv(p)
        assert report.ok
        assert len(rows) == len(published)
        actuals = [r for r in rows if r.is_actual]
        assert actuals and all(r.vintage is None for r in actuals)

    def test_empty_file_no_error(self, tmp_path):
        p = tmp_path / "out.csv"
        p.write_text("commodity,year,kind,value,vintage\n", encoding="utf-8")
        rows, report = parse_output_csv(p)
        assert rows == [] and report.ok

    def test_conflicting_duplicate_is_integrity_error(self, tmp_path):
        p = tmp_path / "out.csv"
        p.write_text(
            "commodity,year,kind,value,vintage\n"
            "corn,2020,forecast,4.10,2020-08-01\n"
            "corn,2020,forecast,4.20,2020-08-01\n",
            encoding="utf-8",
        )
        with pytest.raises(IntegrityError):
            parse_output_csv(p)

    def test_identical_duplicate_tolerated(self, tmp_path):
        p = tmp_path / "out.csv"
        p.write_text(
            "commodity,year,kind,value,vintage\n"
            "corn,2020,forecast,4.10,2020-08-01\n"
            "corn,2020,forecast,4.10,2020-08-01\n",
            encoding="utf-8",
        )
        rows, _ = parse_output_csv(p)
        assert len(rows) == 1


class TestMarketingWeights:
    def test_sum_and_bounds_enforced(self):
        my = MarketingYear(Commodity.CORN, 2020)
        with pytest.raises(InputError):
            MarketingWeights(Commodity.CORN, my, np.full(12, 0.1))
        with pytest.raises(InputError):
            MarketingWeights(Commodity.CORN, my, np.array([-0.1] + [0.1] * 11))

    def test_olympic_mean_drops_extremes(self):
        assert olympic_mean([1, 2, 3, 4, 10]) == pytest.approx(3.0)

    def test_olympic_equals_mean_on_constant(self):
        assert olympic_mean([8, 8, 8, 8, 8]) == pytest.approx(8.0)

    @given(st.lists(st.floats(0.1, 100), min_size=3, max_size=9))
    @settings(max_examples=1000)
    def test_olympic_mean_between_min_and_max(self, values):
        m = olympic_mean(values)
        assert min(values) - 1e-9 <= m <= max(values) + 1e-9


def _pct_dataset(per_year_pcts):
    """Dataset with given corn percentages keyed by marketing year."""
    records = []
    cal = CommodityCalendar.for_commodity(Commodity.CORN)
    for year, pct in per_year_pcts.items():
        lo, _ = marketing_year_window(cal, MarketingYear(Commodity.CORN, year))
        for k in range(12):
            records.append(
                RawInputRecord(Commodity.CORN, lo.add_months(k),
                               FieldKind.MARKETING_PCT, float(pct[k]))
            )
    return Dataset.from_records(records)


class TestForecastWeights:
    def test_grain_constant_history_gives_profile(self):
        pct = np.array([8.0] * 4 + [9.0] * 4 + [8.0] * 4)
        pct = 100.0 * pct / pct.sum()
        ds = _pct_dataset({y: pct for y in range(2015, 2020)})
        cal = CommodityCalendar.for_commodity(Commodity.CORN)
        w = forecast_weights(ds, cal, MarketingYear(Commodity.CORN, 2020))
        np.testing.assert_allclose(w.w, pct / 100.0, atol=1e-12)

    def test_insufficient_history_names_first_usable_year(self):
        pct = np.full(12, 100.0 / 12)
        ds = _pct_dataset({2017: pct, 2018: pct, 2019: pct})
        cal = CommodityCalendar.for_commodity(Commodity.CORN)
        with pytest.raises(HistoryError) as err:
            forecast_weights(ds, cal, MarketingYear(Commodity.CORN, 2020))
        assert "2022" in str(err.value)  # 2017 + 5

    def test_rescaling_invariance(self, fixture_data):
        _, _, ds = fixture_data
        cal = CommodityCalendar.for_commodity(Commodity.SOYBEANS)
        my = MarketingYear(Commodity.SOYBEANS, 2019)
        w1 = forecast_weights(ds, cal, my)
        # same percentages, uniformly halved: renormalization absorbs scale
        records = []
        for year in ds.pct_years(Commodity.SOYBEANS):
            arr = ds.actual_pct(Commodity.SOYBEANS, year)
            lo, _ = marketing_year_window(cal, MarketingYear(Commodity.SOYBEANS, year))
            for k in range(12):
                records.append(
                    RawInputRecord(Commodity.SOYBEANS, lo.add_months(k),
                                   FieldKind.MARKETING_PCT, float(arr[k]) / 2.0)
                )
        w2 = forecast_weights(Dataset.from_records(records), cal, my)
        np.testing.assert_allclose(w1.w, w2.w, atol=1e-12)

    def test_cotton_uses_olympic_over_seven_years(self):
        cal = CommodityCalendar.for_commodity(Commodity.COTTON)
        per_year = {}
        rng = np.random.default_rng(0)
        for year in range(2013, 2020):
            base = np.full(12, 100.0 / 12) + rng.normal(0, 1.0, 12)
            per_year[year] = 100.0 * base / base.sum()
        records = []
        for year, pct in per_year.items():
            lo, _ = marketing_year_window(cal, MarketingYear(Commodity.COTTON, year))
            for k in range(12):
                records.append(
                    RawInputRecord(Commodity.COTTON, lo.add_months(k),
                                   FieldKind.MARKETING_PCT, float(pct[k]))
                )
        ds = Dataset.from_records(records)
        w = forecast_weights(ds, cal, MarketingYear(Commodity.COTTON, 2020))
        mat = np.vstack([per_year[y] for y in range(2013, 2020)])
        olympic = np.array([olympic_mean(mat[:, k]) for k in range(12)])
        np.testing.assert_allclose(w.w, olympic / olympic.sum(), atol=1e-12)


class TestValidate:
    def test_intact_dataset_empty_report(self, fixture_data):
        _, _, ds = fixture_data
        assert validate_dataset(ds).ok

    def test_deleted_month_reports_gap(self, fixture_data):
        records, _, _ = fixture_data
        corn_prices = [r for r in records
                       if r.commodity is Commodity.CORN and r.field_kind is FieldKind.PRICE_RECEIVED]
        victim = corn_prices[len(corn_prices) // 2]
        pruned = [r for r in records if r is not victim]
        report = validate_dataset(Dataset.from_records(pruned))
        gaps = [e for e in report.entries if e.startswith("gap")]
        assert len(gaps) == 1
        assert str(victim.stamp) in gaps[0]

    def test_doubled_percentages_flagged_every_year(self):
        pct = np.full(12, 2 * 100.0 / 12)
        ds = _pct_dataset({y: pct for y in range(2015, 2020)})
        report = validate_dataset(ds, require_coverage=False)
        weight_entries = [e for e in report.entries if e.startswith("weights")]
        assert len(weight_entries) == 5


class TestNormalizedRoundTrip:
    def test_value_identical(self, tmp_path, fixture_data):
        records, published, ds = fixture_data
        p = tmp_path / "normalized.csv"
        write_normalized(p, records, published)
        r2, p2 = read_normalized(p)
        assert Dataset.from_records(r2, p2) == ds

    def test_rejects_wrong_header(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("a,b,c\n", encoding="utf-8")
        with pytest.raises(ParseError):
            read_normalized(p)
