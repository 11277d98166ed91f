"""Synthetic USDA-shaped fixture data for pipeline tests.

Builds a full-coverage dataset (prices, marketing percentages, weekly
futures quotes, basis values, published season-average forecasts/actuals)
for all four commodities spanning marketing years 1992-2024, plus writers
that emit raw CSV files in the default ingest mapping's schema.
"""

from __future__ import annotations

import csv
import datetime as dt

import numpy as np

from cropcast.external import ContractMapping, composite_mya_forecast
from cropcast.ingest import (
    Dataset,
    FieldKind,
    PublishedMya,
    RawInputRecord,
    forecast_weights,
)
from cropcast.timeseries import (
    Commodity,
    CommodityCalendar,
    MarketingYear,
    MonthStamp,
    marketing_year_window,
)

FIRST_MY = 1992
LAST_MY = 2024

_BASE_LEVEL = {
    Commodity.CORN: 4.2,
    Commodity.SOYBEANS: 10.5,
    Commodity.WHEAT: 5.4,
    Commodity.COTTON: 65.0,
}

# marketing percentage seasonal profile (heavier right after harvest)
_PCT_PROFILE = np.array([14, 13, 12, 10, 8, 7, 6, 6, 6, 6, 6, 6], dtype=float)


def _price_path(commodity: Commodity, n: int, rng: np.random.Generator) -> np.ndarray:
    base = _BASE_LEVEL[commodity]
    drift = rng.normal(0, 0.01 * base, n).cumsum()
    seasonal = 0.05 * base * np.sin(2 * np.pi * np.arange(n) / 12 + rng.uniform(0, np.pi))
    noise = rng.normal(0, 0.02 * base, n)
    return np.clip(base + drift + seasonal + noise, 0.15 * base, None)


def build_dataset(seed: int = 1234) -> tuple:
    """Returns (records, published, Dataset) spanning MY 1992..2024."""
    rng = np.random.default_rng(seed)
    records = []
    published = []
    datasets_prices = {}

    for commodity in Commodity:
        cal = CommodityCalendar.for_commodity(commodity)
        start, _ = marketing_year_window(cal, MarketingYear(commodity, FIRST_MY))
        _, end = marketing_year_window(cal, MarketingYear(commodity, LAST_MY))
        n = start.months_until(end) + 1
        prices = _price_path(commodity, n, rng)
        datasets_prices[commodity] = (start, prices)
        for i in range(n):
            records.append(
                RawInputRecord(commodity, start.add_months(i), FieldKind.PRICE_RECEIVED,
                               round(float(prices[i]), 4))
            )

        # marketing percentages per MY, rounded to 2dp (sum stays within 0.5)
        for my_year in range(FIRST_MY, LAST_MY + 1):
            profile = _PCT_PROFILE + rng.normal(0, 0.4, 12)
            profile = np.clip(profile, 0.5, None)
            pct = np.round(100.0 * profile / profile.sum(), 2)
            lo, _ = marketing_year_window(cal, MarketingYear(commodity, my_year))
            for k in range(12):
                records.append(
                    RawInputRecord(commodity, lo.add_months(k), FieldKind.MARKETING_PCT,
                                   float(pct[k]))
                )

        # monthly basis history: cash minus futures, mildly seasonal
        base = _BASE_LEVEL[commodity]
        for my_year in range(FIRST_MY, LAST_MY + 1):
            lo, _ = marketing_year_window(cal, MarketingYear(commodity, my_year))
            for k in range(12):
                stamp = lo.add_months(k)
                value = 0.05 * base * np.sin(2 * np.pi * stamp.month / 12) + rng.normal(0, 0.01 * base)
                records.append(
                    RawInputRecord(commodity, stamp, FieldKind.BASIS, round(float(value), 4))
                )

        # weekly futures quotes for each mapped contract, starting 14 months
        # before the contract month
        mapping = ContractMapping.default(commodity)
        contracts = set()
        for my_year in range(FIRST_MY, LAST_MY + 1):
            lo, _ = marketing_year_window(cal, MarketingYear(commodity, my_year))
            for k in range(12):
                contracts.add(mapping.contract_for(lo.add_months(k)))
        for contract in sorted(contracts):
            idx = start.months_until(contract)
            anchor = prices[min(max(idx, 0), n - 1)]
            quote_day = dt.date(contract.year, contract.month, 1) - dt.timedelta(days=540)
            level = anchor + rng.normal(0, 0.02 * base)
            while quote_day < dt.date(contract.year, contract.month, 28):
                level += rng.normal(0, 0.005 * base)
                records.append(
                    RawInputRecord(commodity, contract, FieldKind.FUTURES_PRICE,
                                   round(float(max(level, 0.1 * base)), 4),
                                   vintage=quote_day)
                )
                quote_day += dt.timedelta(days=7)

    ds = Dataset.from_records(records)

    # published actuals: Eq.-2 style weighted average of actual prices with
    # actual percentages; published forecasts: the composite procedure at
    # weekly pre-season vintages, rounded to cents
    for commodity in Commodity:
        cal = CommodityCalendar.for_commodity(commodity)
        start, prices = datasets_prices[commodity]
        for my_year in range(FIRST_MY, LAST_MY + 1):
            lo, _ = marketing_year_window(cal, MarketingYear(commodity, my_year))
            pct = ds.actual_pct(commodity, my_year)
            i0 = start.months_until(lo)
            monthly = np.array([round(float(prices[i0 + k]), 4) for k in range(12)])
            actual = float(monthly @ (pct / pct.sum()))
            published.append(PublishedMya(commodity, my_year, round(actual, 4), None, True))
            if my_year >= FIRST_MY + 7:
                season_start = dt.date(lo.year, lo.month, 1)
                for weeks_back in (6, 5, 4, 3, 2, 1):
                    vintage = season_start - dt.timedelta(weeks=weeks_back)
                    fc = composite_mya_forecast(ds, MarketingYear(commodity, my_year), vintage)
                    published.append(
                        PublishedMya(commodity, my_year, round(fc, 2), vintage, False)
                    )

    ds_full = Dataset.from_records(records, published)
    return records, published, ds_full


def write_raw_input_csv(path, records) -> None:
    """Raw file in the default ingest mapping's schema."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["commodity", "year", "month", "field", "value", "vintage", "note"])
        for r in records:
            writer.writerow([
                r.commodity.value, r.stamp.year, r.stamp.month, r.field_kind.value,
                repr(r.value), r.vintage.isoformat() if r.vintage else "", "x",
            ])


def write_raw_output_csv(path, published) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["commodity", "year", "kind", "value", "vintage"])
        for p in published:
            writer.writerow([
                p.commodity.value, p.my_year, "actual" if p.is_actual else "forecast",
                repr(p.value), p.vintage.isoformat() if p.vintage else "",
            ])
