"""External forecast ingestion and the futures-plus-basis benchmark.

Two jobs live here: (a) loading precomputed monthly forecasts produced by
models that run outside this package, so comparison tables can include
them; (b) replicating the operational futures-plus-basis season-average
forecast: each marketing-year month gets the mapped nearby contract's
settlement plus a historical basis average, actual published prices replace
forecasts as they become known, and the weighted monthly composite prices
sum to the season average.

External forecast files are line-oriented, delimiter-separated, UTF-8:
``model,commodity,split,v1,...,v12`` with a header row.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import CoverageError, IntegrityError, ParseError, SchemaError
from .ingest import Dataset, MarketingWeights, forecast_weights, olympic_mean
from .timeseries import (
    Commodity,
    CommodityCalendar,
    MarketingYear,
    MonthStamp,
    marketing_year_window,
    month_index_in_my,
)

# ---------------------------------------------------------------------------
# external forecast files


_EXTERNAL_HEADER = ["model", "commodity", "split"] + [f"m{i}" for i in range(1, 13)]


@dataclass(frozen=True)
class ExternalForecasts:
    """Point forecasts keyed by (model, commodity, split id)."""

    entries: Mapping[Tuple[str, Commodity, int], np.ndarray]

    @property
    def models(self) -> Tuple[str, ...]:
        return tuple(sorted({k[0] for k in self.entries}))

    def get(self, model: str, commodity: Commodity, split_id: int) -> np.ndarray:
        return self.entries[(model, commodity, split_id)]


def load_external_forecasts(path) -> ExternalForecasts:
    path = Path(path)
    if not path.exists():
        raise ParseError(f"external forecast file not found: {path}", path=str(path))
    entries: Dict[Tuple[str, Commodity, int], np.ndarray] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:3]] != ["model", "commodity", "split"]:
            raise SchemaError(f"expected header starting model,commodity,split; got {header}")
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 15:
                raise SchemaError(
                    f"line {line_no}: expected model,commodity,split + 12 values, "
                    f"got {len(row)} fields"
                )
            model = row[0].strip()
            try:
                commodity = Commodity(row[1].strip().lower())
            except ValueError as exc:
                raise SchemaError(f"line {line_no}: unknown commodity {row[1]!r}") from exc
            try:
                split_id = int(row[2])
                values = np.array([float(v) for v in row[3:]], dtype=float)
            except ValueError as exc:
                raise SchemaError(f"line {line_no}: {exc}") from exc
            if not np.all(np.isfinite(values)) or np.any(values <= 0):
                raise SchemaError(f"line {line_no}: forecasts must be finite and positive")
            key = (model, commodity, split_id)
            if key in entries:
                raise IntegrityError(f"line {line_no}: duplicate entry for {key}")
            entries[key] = values
    return ExternalForecasts(entries=entries)


def write_external_forecasts(path, store: ExternalForecasts) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_EXTERNAL_HEADER)
        for (model, commodity, split_id) in sorted(
            store.entries, key=lambda k: (k[0], k[1].value, k[2])
        ):
            values = store.entries[(model, commodity, split_id)]
            writer.writerow(
                [model, commodity.value, split_id] + [repr(float(v)) for v in values]
            )


# ---------------------------------------------------------------------------
# contract mapping and basis table


# Month-of-marketing-year -> nearby futures contract month, following the
# harvest cycle.  Corn: December futures price October-November (and the
# post-expiry September), March for December-February, May for March-April,
# July for May-June, September for July-August.  Other commodities use the
# analogous cycles for their contract calendars.
DEFAULT_CONTRACT_MONTHS: Dict[Commodity, Dict[int, int]] = {
    Commodity.CORN: {
        9: 12, 10: 12, 11: 12, 12: 3, 1: 3, 2: 3, 3: 5, 4: 5, 5: 7, 6: 7, 7: 9, 8: 9,
    },
    Commodity.SOYBEANS: {
        9: 11, 10: 11, 11: 1, 12: 1, 1: 3, 2: 3, 3: 5, 4: 5, 5: 7, 6: 7, 7: 8, 8: 9,
    },
    Commodity.WHEAT: {
        6: 9, 7: 9, 8: 12, 9: 12, 10: 12, 11: 12, 12: 3, 1: 3, 2: 3, 3: 5, 4: 5, 5: 7,
    },
    Commodity.COTTON: {
        8: 10, 9: 10, 10: 12, 11: 12, 12: 3, 1: 3, 2: 3, 3: 5, 4: 5, 5: 7, 6: 7, 7: 10,
    },
}


@dataclass(frozen=True)
class ContractMapping:
    """Calendar month -> futures contract month for one commodity."""

    commodity: Commodity
    month_to_contract: Mapping[int, int]

    @classmethod
    def default(cls, commodity: Commodity) -> "ContractMapping":
        return cls(commodity, dict(DEFAULT_CONTRACT_MONTHS[commodity]))

    def __post_init__(self) -> None:
        cal = CommodityCalendar.for_commodity(self.commodity)
        lo, _ = marketing_year_window(cal, MarketingYear(self.commodity, 2000))
        for k in range(12):
            month = lo.add_months(k).month
            if month not in self.month_to_contract:
                raise CoverageError(
                    f"{self.commodity} contract mapping missing month {month}"
                )

    def contract_for(self, stamp: MonthStamp) -> MonthStamp:
        """Contract expiry stamp for a given price month (never in the past)."""
        cmonth = self.month_to_contract[stamp.month]
        year = stamp.year if cmonth >= stamp.month else stamp.year + 1
        return MonthStamp(year, cmonth)


@dataclass(frozen=True)
class BasisTable:
    """Historical average basis per calendar month of the marketing year."""

    commodity: Commodity
    by_month: Mapping[int, float]  # calendar month -> average basis

    def value_for(self, stamp: MonthStamp) -> float:
        if stamp.month not in self.by_month:
            raise CoverageError(f"no basis average for {self.commodity} month {stamp.month}")
        return self.by_month[stamp.month]


def basis_table(ds: Dataset, cal: CommodityCalendar, my: MarketingYear) -> BasisTable:
    """5-year mean (grains) or 7-year Olympic mean (cotton) of monthly basis.

    Only months strictly before the target marketing year contribute.
    """
    n_years = 7 if cal.commodity is Commodity.COTTON else 5
    lo, _ = marketing_year_window(cal, my)
    table: Dict[int, float] = {}
    for k in range(12):
        stamp = lo.add_months(k)
        history = []
        for back in range(1, n_years + 1):
            past = MonthStamp(stamp.year - back, stamp.month)
            if past >= lo:
                continue
            value = ds.basis_value(cal.commodity, past)
            if value is not None:
                history.append(value)
        if len(history) < n_years:
            raise CoverageError(
                f"{cal.commodity} month {stamp.month}: only {len(history)} of "
                f"{n_years} prior basis values before MY {my.start_year}"
            )
        if cal.commodity is Commodity.COTTON:
            table[stamp.month] = olympic_mean(history)
        else:
            table[stamp.month] = float(np.mean(history))
    return BasisTable(cal.commodity, table)


# ---------------------------------------------------------------------------
# futures-plus-basis and the composite season average


@dataclass(frozen=True)
class FuturesQuotes:
    """Settlements keyed by contract stamp, resolved at a vintage date."""

    commodity: Commodity
    quotes: Mapping[MonthStamp, Sequence[Tuple[Optional[dt.date], float]]]

    @classmethod
    def from_dataset(cls, ds: Dataset, commodity: Commodity) -> "FuturesQuotes":
        return cls(
            commodity,
            {c: tuple(ds._futures[(commodity, c)]) for c in ds.futures_contracts(commodity)},
        )

    def settlement(self, contract: MonthStamp, vintage: Optional[dt.date]) -> Optional[float]:
        quotes = self.quotes.get(contract)
        if not quotes:
            return None
        best = None
        for q_date, value in quotes:
            if vintage is None or q_date is None or q_date <= vintage:
                best = value
            elif q_date is not None and vintage is not None and q_date > vintage:
                break
        return best


def futures_plus_basis_forecast(
    futures: FuturesQuotes,
    mapping: ContractMapping,
    basis: BasisTable,
    my: MarketingYear,
    vintage: Optional[dt.date] = None,
) -> np.ndarray:
    """Monthly forecast: mapped nearby contract settlement plus basis average."""
    cal = CommodityCalendar.for_commodity(my.commodity)
    lo, _ = marketing_year_window(cal, my)
    out = np.empty(12)
    for k in range(12):
        stamp = lo.add_months(k)
        contract = mapping.contract_for(stamp)
        settlement = futures.settlement(contract, vintage)
        if settlement is None:
            raise CoverageError(
                f"no settlement for {my.commodity} contract {contract} "
                f"(price month {stamp}, vintage {vintage})"
            )
        out[k] = settlement + basis.value_for(stamp)
    return out


def composite_mya_forecast(
    ds: Dataset,
    my: MarketingYear,
    vintage: Optional[dt.date],
    mapping: Optional[ContractMapping] = None,
) -> float:
    """Season-average forecast from composite monthly prices.

    Months whose actual price is published by the vintage use the actual;
    remaining months use futures-plus-basis at that vintage.  Monthly
    weights are composite price times the forecast marketing percentage,
    and the season average is their sum.  A month's actual is treated as
    published once the vintage falls in a later calendar month.
    """
    cal = CommodityCalendar.for_commodity(my.commodity)
    if mapping is None:
        mapping = ContractMapping.default(my.commodity)
    lo, _ = marketing_year_window(cal, my)
    weights = forecast_weights(ds, cal, my)

    fb = None  # built lazily; vintages after the year end need no futures data
    composite = np.empty(12)
    for k in range(12):
        stamp = lo.add_months(k)
        actual = None
        if vintage is not None and (vintage.year, vintage.month) > (stamp.year, stamp.month):
            actual = ds._prices.get(my.commodity, {}).get(stamp)
        if actual is not None:
            composite[k] = actual
        else:
            if fb is None:
                futures = FuturesQuotes.from_dataset(ds, my.commodity)
                basis = basis_table(ds, cal, my)
                fb = futures_plus_basis_forecast(futures, mapping, basis, my, vintage)
            composite[k] = fb[k]
    return float(composite @ weights.w)


def select_benchmark_vintage(
    ds: Dataset, my: MarketingYear
) -> Optional[dt.date]:
    """Second-to-last published forecast vintage strictly before the year starts."""
    cal = CommodityCalendar.for_commodity(my.commodity)
    lo, _ = marketing_year_window(cal, my)
    cutoff = dt.date(lo.year, lo.month, 1)
    vintages = sorted(
        r.vintage
        for r in ds.published_forecasts(my.commodity, my.start_year)
        if r.vintage is not None and r.vintage < cutoff
    )
    if len(vintages) < 2:
        return vintages[-1] if vintages else None
    return vintages[-2]
