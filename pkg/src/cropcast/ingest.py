"""Ingestion of the two USDA ERS data files into a validated dataset.

The raw files are delimiter-separated long-format tables; exact column
names are not fixed here but supplied by a small mapping configuration, so
schema drift in a future file version is a config edit.  Rows that fail to
parse are collected in a report with their line numbers rather than
aborting the file.

Percentages are stored exactly as published (0-100) and only become
fractions inside MarketingWeights.  The normalized on-disk format is one
record per row with fixed columns (commodity, year, month, field, value,
vintage), UTF-8, '.' decimal separator; marketing-year-level published
values use month 0.
"""

from __future__ import annotations

import copy
import csv
import datetime as dt
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import HistoryError, InputError, IntegrityError, ParseError
from .timeseries import (
    Commodity,
    CommodityCalendar,
    MarketingYear,
    MonthSeries,
    MonthStamp,
    marketing_year_window,
    month_index_in_my,
    my_containing,
)


class FieldKind(enum.Enum):
    PRICE_RECEIVED = "price_received"
    MARKETING_PCT = "marketing_pct"
    FUTURES_PRICE = "futures_price"
    BASIS = "basis"


@dataclass(frozen=True)
class RawInputRecord:
    commodity: Commodity
    stamp: MonthStamp
    field_kind: FieldKind
    value: float
    vintage: Optional[dt.date] = None

    def __post_init__(self) -> None:
        if self.field_kind is FieldKind.MARKETING_PCT and not 0.0 <= self.value <= 100.0:
            raise InputError(f"marketing percentage {self.value} outside [0, 100]")
        if self.field_kind in (FieldKind.PRICE_RECEIVED, FieldKind.FUTURES_PRICE):
            if self.value <= 0.0:
                raise InputError(f"{self.field_kind.value} must be positive, got {self.value}")


@dataclass(frozen=True)
class PublishedMya:
    commodity: Commodity
    my_year: int
    value: float
    vintage: Optional[dt.date]
    is_actual: bool


@dataclass
class ParseReport:
    n_accepted: int = 0
    rejected: List[Tuple[int, str]] = field(default_factory=list)
    ignored_columns: Tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.rejected


DEFAULT_MAPPING: dict = {
    "input": {
        "delimiter": ",",
        "columns": {
            "commodity": "commodity",
            "year": "year",
            "month": "month",
            "field": "field",
            "value": "value",
            "vintage": "vintage",
        },
        "commodity_labels": {
            "corn": "corn",
            "soybeans": "soybeans",
            "soybean": "soybeans",
            "wheat": "wheat",
            "cotton": "cotton",
            "upland cotton": "cotton",
        },
        "field_labels": {
            "price_received": "price_received",
            "prices received": "price_received",
            "marketing_pct": "marketing_pct",
            "marketing percentage": "marketing_pct",
            "futures_price": "futures_price",
            "futures price": "futures_price",
            "basis": "basis",
        },
        "vintage_format": "%Y-%m-%d",
    },
    "output": {
        "delimiter": ",",
        "columns": {
            "commodity": "commodity",
            "year": "year",
            "kind": "kind",
            "value": "value",
            "vintage": "vintage",
        },
        "commodity_labels": {
            "corn": "corn",
            "soybeans": "soybeans",
            "soybean": "soybeans",
            "wheat": "wheat",
            "cotton": "cotton",
            "upland cotton": "cotton",
        },
        "forecast_labels": ["forecast", "mya_forecast"],
        "actual_labels": ["actual", "mya_actual"],
        "vintage_format": "%Y-%m-%d",
    },
}

_MONTH_NAMES = {
    "jan": 1, "feb": 2, "mar": 3, "apr": 4, "may": 5, "jun": 6,
    "jul": 7, "aug": 8, "sep": 9, "oct": 10, "nov": 11, "dec": 12,
}


def load_mapping(path: Optional[Path]) -> dict:
    if path is None:
        return copy.deepcopy(DEFAULT_MAPPING)
    import json

    merged = copy.deepcopy(DEFAULT_MAPPING)
    with open(path, "r", encoding="utf-8") as fh:
        user = json.load(fh)
    for section in ("input", "output"):
        if section in user:
            for key, val in user[section].items():
                if isinstance(val, dict) and isinstance(merged[section].get(key), dict):
                    merged[section][key].update(val)
                else:
                    merged[section][key] = val
    return merged


def _parse_month(text: str) -> int:
    t = text.strip().lower()
    if t[:3] in _MONTH_NAMES:
        return _MONTH_NAMES[t[:3]]
    m = int(t)
    if not 1 <= m <= 12:
        raise ValueError(f"month {text!r} outside 1..12")
    return m


def _parse_vintage(text: str, fmt: str) -> Optional[dt.date]:
    t = text.strip()
    if not t:
        return None
    return dt.datetime.strptime(t, fmt).date()


def _open_reader(path: Path, delimiter: str):
    fh = open(path, "r", encoding="utf-8", newline="")
    reader = csv.DictReader(fh, delimiter=delimiter)
    if reader.fieldnames is None:
        fh.close()
        raise ParseError("file has no header row", path=str(path))
    return fh, reader


def parse_input_csv(
    path, mapping: Optional[dict] = None
) -> Tuple[List[RawInputRecord], ParseReport]:
    """Parse the monthly input file (prices, percentages, futures, basis)."""
    cfg = (mapping or DEFAULT_MAPPING)["input"]
    cols = cfg["columns"]
    path = Path(path)
    if not path.exists():
        raise ParseError(f"input file not found: {path}", path=str(path))
    records: List[RawInputRecord] = []
    report = ParseReport()
    fh, reader = _open_reader(path, cfg["delimiter"])
    with fh:
        lower_fields = {f.lower(): f for f in reader.fieldnames}
        required = {k: cols[k].lower() for k in ("commodity", "year", "month", "field", "value")}
        missing = [c for c in required.values() if c not in lower_fields]
        if missing:
            raise ParseError(
                f"missing required columns {missing}; present: {reader.fieldnames}",
                path=str(path),
            )
        vintage_col = lower_fields.get(cols.get("vintage", "").lower())
        used = {lower_fields[c] for c in required.values()} | ({vintage_col} if vintage_col else set())
        report.ignored_columns = tuple(f for f in reader.fieldnames if f not in used)
        for line_no, row in enumerate(reader, start=2):
            try:
                label = row[lower_fields[required["commodity"]]].strip().lower()
                if label not in cfg["commodity_labels"]:
                    report.rejected.append((line_no, f"unknown commodity label {label!r}"))
                    continue
                commodity = Commodity(cfg["commodity_labels"][label])
                flabel = row[lower_fields[required["field"]]].strip().lower()
                if flabel not in cfg["field_labels"]:
                    report.rejected.append((line_no, f"unknown field label {flabel!r}"))
                    continue
                kind = FieldKind(cfg["field_labels"][flabel])
                year = int(row[lower_fields[required["year"]]])
                month = _parse_month(row[lower_fields[required["month"]]])
                raw_value = row[lower_fields[required["value"]]].strip()
                if raw_value == "":
                    report.rejected.append((line_no, "empty value cell"))
                    continue
                value = float(raw_value)
                vintage = None
                if vintage_col and row.get(vintage_col):
                    vintage = _parse_vintage(row[vintage_col], cfg["vintage_format"])
                records.append(
                    RawInputRecord(commodity, MonthStamp(year, month), kind, value, vintage)
                )
            except (ValueError, InputError) as exc:
                report.rejected.append((line_no, str(exc)))
    report.n_accepted = len(records)
    return records, report


def parse_output_csv(
    path, mapping: Optional[dict] = None
) -> Tuple[List[PublishedMya], ParseReport]:
    """Parse the published MYA forecast/actual file."""
    cfg = (mapping or DEFAULT_MAPPING)["output"]
    cols = cfg["columns"]
    path = Path(path)
    if not path.exists():
        raise ParseError(f"output file not found: {path}", path=str(path))
    rows: List[PublishedMya] = []
    report = ParseReport()
    seen: Dict[tuple, float] = {}
    fh, reader = _open_reader(path, cfg["delimiter"])
    with fh:
        lower_fields = {f.lower(): f for f in reader.fieldnames}
        required = {k: cols[k].lower() for k in ("commodity", "year", "kind", "value")}
        missing = [c for c in required.values() if c not in lower_fields]
        if missing:
            raise ParseError(
                f"missing required columns {missing}; present: {reader.fieldnames}",
                path=str(path),
            )
        vintage_col = lower_fields.get(cols.get("vintage", "").lower())
        for line_no, row in enumerate(reader, start=2):
            try:
                label = row[lower_fields[required["commodity"]]].strip().lower()
                if label not in cfg["commodity_labels"]:
                    report.rejected.append((line_no, f"unknown commodity label {label!r}"))
                    continue
                commodity = Commodity(cfg["commodity_labels"][label])
                kind = row[lower_fields[required["kind"]]].strip().lower()
                if kind in cfg["forecast_labels"]:
                    is_actual = False
                elif kind in cfg["actual_labels"]:
                    is_actual = True
                else:
                    report.rejected.append((line_no, f"unknown kind label {kind!r}"))
                    continue
                year = int(row[lower_fields[required["year"]]])
                value = float(row[lower_fields[required["value"]]])
                vintage = None
                if vintage_col and row.get(vintage_col):
                    vintage = _parse_vintage(row[vintage_col], cfg["vintage_format"])
                key = (commodity, year, vintage, is_actual)
                if key in seen:
                    if seen[key] != value:
                        raise IntegrityError(
                            f"conflicting duplicate for {commodity} MY {year} "
                            f"vintage {vintage}: {seen[key]} vs {value} (line {line_no})"
                        )
                    continue
                seen[key] = value
                rows.append(PublishedMya(commodity, year, value, vintage, is_actual))
            except IntegrityError:
                raise
            except (ValueError, InputError) as exc:
                report.rejected.append((line_no, str(exc)))
    report.n_accepted = len(rows)
    return rows, report


# ---------------------------------------------------------------------------
# the normalized dataset


@dataclass(frozen=True)
class MarketingWeights:
    """Forecast marketing-percentage weights for one marketing year, as fractions."""

    commodity: Commodity
    my: MarketingYear
    w: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.w, dtype=float)
        if w.shape != (12,):
            raise InputError("weights must hold exactly 12 values")
        if np.any(w < 0):
            raise InputError("weights must be non-negative")
        if abs(w.sum() - 1.0) > 1e-9:
            raise InputError(f"weights must sum to 1, got {w.sum()!r}")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "w", w)


class Dataset:
    """Normalized in-memory dataset; immutable after construction."""

    def __init__(
        self,
        prices: Mapping[Commodity, Mapping[MonthStamp, float]],
        marketing_pct: Mapping[Tuple[Commodity, int], np.ndarray],
        futures: Mapping[Tuple[Commodity, MonthStamp], Sequence[Tuple[Optional[dt.date], float]]],
        basis: Mapping[Tuple[Commodity, MonthStamp], float],
        published: Sequence[PublishedMya] = (),
    ):
        self._prices = {c: dict(m) for c, m in prices.items()}
        self._pct = {k: np.asarray(v, dtype=float) for k, v in marketing_pct.items()}
        self._futures = {k: sorted(v, key=lambda t: (t[0] or dt.date.min)) for k, v in futures.items()}
        self._basis = dict(basis)
        self._published = tuple(published)

    # -- construction ------------------------------------------------------

    @classmethod
    def from_records(
        cls,
        records: Sequence[RawInputRecord],
        published: Sequence[PublishedMya] = (),
    ) -> "Dataset":
        prices: Dict[Commodity, Dict[MonthStamp, float]] = {}
        pct: Dict[Tuple[Commodity, int], np.ndarray] = {}
        futures: Dict[Tuple[Commodity, MonthStamp], list] = {}
        basis: Dict[Tuple[Commodity, MonthStamp], float] = {}
        for r in records:
            if r.field_kind is FieldKind.PRICE_RECEIVED:
                prices.setdefault(r.commodity, {})[r.stamp] = r.value
            elif r.field_kind is FieldKind.MARKETING_PCT:
                cal = CommodityCalendar.for_commodity(r.commodity)
                my = my_containing(cal, r.stamp)
                k = month_index_in_my(cal, r.stamp)
                arr = pct.setdefault((r.commodity, my.start_year), np.full(12, np.nan))
                arr[k - 1] = r.value
            elif r.field_kind is FieldKind.FUTURES_PRICE:
                futures.setdefault((r.commodity, r.stamp), []).append((r.vintage, r.value))
            elif r.field_kind is FieldKind.BASIS:
                basis[(r.commodity, r.stamp)] = r.value
        return cls(prices, pct, futures, basis, published)

    def to_records(self) -> List[RawInputRecord]:
        out: List[RawInputRecord] = []
        for commodity in sorted(self._prices, key=lambda c: c.value):
            for stamp in sorted(self._prices[commodity]):
                out.append(RawInputRecord(commodity, stamp, FieldKind.PRICE_RECEIVED,
                                          self._prices[commodity][stamp]))
        for (commodity, my_year) in sorted(self._pct, key=lambda k: (k[0].value, k[1])):
            cal = CommodityCalendar.for_commodity(commodity)
            first, _ = marketing_year_window(cal, MarketingYear(commodity, my_year))
            arr = self._pct[(commodity, my_year)]
            for k in range(12):
                if not np.isnan(arr[k]):
                    out.append(RawInputRecord(commodity, first.add_months(k),
                                              FieldKind.MARKETING_PCT, float(arr[k])))
        for (commodity, stamp) in sorted(self._futures, key=lambda k: (k[0].value, k[1])):
            for vintage, value in self._futures[(commodity, stamp)]:
                out.append(RawInputRecord(commodity, stamp, FieldKind.FUTURES_PRICE,
                                          value, vintage))
        for (commodity, stamp) in sorted(self._basis, key=lambda k: (k[0].value, k[1])):
            out.append(RawInputRecord(commodity, stamp, FieldKind.BASIS,
                                      self._basis[(commodity, stamp)]))
        return out

    # -- accessors ----------------------------------------------------------

    @property
    def commodities(self) -> Tuple[Commodity, ...]:
        return tuple(sorted(self._prices, key=lambda c: c.value))

    @property
    def published(self) -> Tuple[PublishedMya, ...]:
        return self._published

    def price_range(self, commodity: Commodity) -> Tuple[MonthStamp, MonthStamp]:
        stamps = self._prices.get(commodity)
        if not stamps:
            raise InputError(f"no prices for {commodity}")
        return min(stamps), max(stamps)

    def price_gaps(self, commodity: Commodity) -> List[MonthStamp]:
        stamps = self._prices.get(commodity)
        if not stamps:
            return []
        lo, hi = min(stamps), max(stamps)
        missing = []
        cur = lo
        while cur <= hi:
            if cur not in stamps:
                missing.append(cur)
            cur = cur.add_months(1)
        return missing

    def price_series(self, commodity: Commodity) -> MonthSeries:
        """The contiguous monthly price series; gaps are a hard error."""
        gaps = self.price_gaps(commodity)
        if gaps:
            raise InputError(
                f"{commodity} price series has {len(gaps)} missing months "
                f"(first: {gaps[0]}); gaps are not imputed"
            )
        stamps = self._prices[commodity]
        lo, _ = self.price_range(commodity)
        n = lo.months_until(max(stamps)) + 1
        values = [stamps[lo.add_months(i)] for i in range(n)]
        return MonthSeries(lo, values)

    def actual_pct(self, commodity: Commodity, my_year: int) -> Optional[np.ndarray]:
        return self._pct.get((commodity, my_year))

    def pct_years(self, commodity: Commodity) -> List[int]:
        return sorted(y for (c, y) in self._pct if c is commodity)

    def futures_settlement(
        self, commodity: Commodity, contract: MonthStamp, vintage: Optional[dt.date]
    ) -> Optional[float]:
        """Settlement at the vintage date, or the nearest prior quote."""
        quotes = self._futures.get((commodity, contract))
        if not quotes:
            return None
        if vintage is None:
            return quotes[-1][1]
        best = None
        for q_date, value in quotes:
            if q_date is None or q_date <= vintage:
                best = value
            else:
                break
        return best

    def futures_contracts(self, commodity: Commodity) -> List[MonthStamp]:
        return sorted(s for (c, s) in self._futures if c is commodity)

    def basis_value(self, commodity: Commodity, stamp: MonthStamp) -> Optional[float]:
        return self._basis.get((commodity, stamp))

    def published_actual(self, commodity: Commodity, my_year: int) -> Optional[float]:
        for row in self._published:
            if row.is_actual and row.commodity is commodity and row.my_year == my_year:
                return row.value
        return None

    def published_forecasts(
        self, commodity: Commodity, my_year: int
    ) -> List[PublishedMya]:
        rows = [
            r for r in self._published
            if not r.is_actual and r.commodity is commodity and r.my_year == my_year
        ]
        return sorted(rows, key=lambda r: r.vintage or dt.date.min)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        same_pct = self._pct.keys() == other._pct.keys() and all(
            np.array_equal(self._pct[k], other._pct[k], equal_nan=True) for k in self._pct
        )
        return (
            self._prices == other._prices
            and same_pct
            and self._futures == other._futures
            and self._basis == other._basis
            and self._published == other._published
        )


# ---------------------------------------------------------------------------
# forecast marketing weights


def forecast_weights(
    ds: Dataset, cal: CommodityCalendar, my: MarketingYear
) -> MarketingWeights:
    """Forward-looking weights from prior-year actual percentages.

    Grains average the 5 prior marketing years month by month; cotton uses a
    7-year Olympic average (per-month max and min dropped).  The result is
    renormalized to sum to one, absorbing rounding in the published data.
    """
    if my.commodity is not cal.commodity:
        raise InputError("marketing year commodity does not match calendar")
    n_years = 7 if cal.commodity is Commodity.COTTON else 5
    prior = [my.start_year - k for k in range(1, n_years + 1)]
    rows = []
    for year in prior:
        arr = ds.actual_pct(cal.commodity, year)
        if arr is None or np.any(np.isnan(arr)):
            have = [y for y in ds.pct_years(cal.commodity)
                    if ds.actual_pct(cal.commodity, y) is not None
                    and not np.any(np.isnan(ds.actual_pct(cal.commodity, y)))]
            first_usable = min(have) + n_years if have else None
            raise HistoryError(
                f"{cal.commodity} MY {my.start_year} needs {n_years} prior years of "
                f"percentages; MY {year} incomplete"
                + (f"; first usable marketing year is {first_usable}" if first_usable else "")
            )
        rows.append(arr)
    mat = np.vstack(rows)  # (n_years, 12)
    if cal.commodity is Commodity.COTTON:
        totals = mat.sum(axis=0)
        avg = (totals - mat.max(axis=0) - mat.min(axis=0)) / (n_years - 2)
    else:
        avg = mat.mean(axis=0)
    total = avg.sum()
    if total <= 0:
        raise InputError("prior percentages sum to zero; cannot normalize")
    return MarketingWeights(cal.commodity, my, avg / total)


def olympic_mean(values: Sequence[float]) -> float:
    """Mean after dropping one max and one min; equals the mean on ties."""
    arr = np.asarray(list(values), dtype=float)
    if arr.size < 3:
        raise InputError("Olympic mean needs at least 3 values")
    return float((arr.sum() - arr.max() - arr.min()) / (arr.size - 2))


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    entries: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.entries

    def __str__(self) -> str:
        return "\n".join(self.entries) if self.entries else "dataset valid"


PCT_SUM_TOLERANCE = 0.5
REQUIRED_FIRST_MY = 1997
REQUIRED_LAST_MY = 2024


def validate_dataset(ds: Dataset, require_coverage: bool = True) -> ValidationReport:
    """Report gap months, weight-sum violations, and non-positive prices."""
    report = ValidationReport()
    with_pct = {c for (c, _) in ds._pct}
    for commodity in sorted(set(ds.commodities) | with_pct, key=lambda c: c.value):
        cal = CommodityCalendar.for_commodity(commodity)
        has_prices = commodity in ds._prices and ds._prices[commodity]
        if has_prices:
            for gap in ds.price_gaps(commodity):
                report.entries.append(f"gap: {commodity} missing price for {gap}")
            lo, hi = ds.price_range(commodity)
            for stamp, value in sorted(ds._prices[commodity].items()):
                if value <= 0:
                    report.entries.append(f"nonpositive: {commodity} {stamp} price {value}")
        if require_coverage:
            need_lo, _ = marketing_year_window(cal, MarketingYear(commodity, REQUIRED_FIRST_MY))
            _, need_hi = marketing_year_window(cal, MarketingYear(commodity, REQUIRED_LAST_MY))
            if not has_prices or lo > need_lo or hi < need_hi:
                span = f"{lo}..{hi}" if has_prices else "nothing"
                report.entries.append(
                    f"coverage: {commodity} prices span {span}, need "
                    f"{need_lo}..{need_hi}"
                )
        for year in ds.pct_years(commodity):
            arr = ds.actual_pct(commodity, year)
            if np.any(np.isnan(arr)):
                continue  # incomplete years only matter via forecast_weights
            total = float(arr.sum())
            if abs(total - 100.0) > PCT_SUM_TOLERANCE:
                report.entries.append(
                    f"weights: {commodity} MY {year} percentages sum to {total:.3f}"
                )
    return report


# ---------------------------------------------------------------------------
# normalized on-disk format


_NORMALIZED_HEADER = ["commodity", "year", "month", "field", "value", "vintage"]


def write_normalized(path, records: Sequence[RawInputRecord],
                     published: Sequence[PublishedMya] = ()) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_NORMALIZED_HEADER)
        for r in records:
            writer.writerow([
                r.commodity.value, r.stamp.year, r.stamp.month, r.field_kind.value,
                repr(float(r.value)), r.vintage.isoformat() if r.vintage else "",
            ])
        for p in published:
            kind = "mya_actual" if p.is_actual else "mya_forecast"
            writer.writerow([
                p.commodity.value, p.my_year, 0, kind,
                repr(float(p.value)), p.vintage.isoformat() if p.vintage else "",
            ])


def read_normalized(path) -> Tuple[List[RawInputRecord], List[PublishedMya]]:
    path = Path(path)
    if not path.exists():
        raise ParseError(f"normalized file not found: {path}", path=str(path))
    records: List[RawInputRecord] = []
    published: List[PublishedMya] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _NORMALIZED_HEADER:
            raise ParseError(f"unexpected header {header}", path=str(path))
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 6:
                raise ParseError(f"expected 6 columns, got {len(row)}",
                                 path=str(path), line=line_no)
            commodity = Commodity(row[0])
            year, month = int(row[1]), int(row[2])
            value = float(row[4])
            vintage = dt.date.fromisoformat(row[5]) if row[5] else None
            if row[3] in ("mya_actual", "mya_forecast"):
                published.append(
                    PublishedMya(commodity, year, value, vintage, row[3] == "mya_actual")
                )
            else:
                records.append(
                    RawInputRecord(commodity, MonthStamp(year, month),
                                   FieldKind(row[3]), value, vintage)
                )
    return records, published
