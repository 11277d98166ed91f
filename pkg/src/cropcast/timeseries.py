"""Calendar-aware monthly time series and marketing-year arithmetic.

A marketing year (MY) is the 12-month window aligned to a commodity's
harvest cycle: corn and soybeans run September-August, wheat June-May,
cotton August-July.  Marketing years are denoted by their starting
calendar year, so corn MY 2023 spans September 2023 through August 2024.

All types here are immutable after construction and safe to share across
concurrent evaluation tasks.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator, Sequence, Tuple

import numpy as np

from .errors import CalendarError, InputError, WindowBoundsError


class Commodity(enum.Enum):
    CORN = "corn"
    SOYBEANS = "soybeans"
    WHEAT = "wheat"
    COTTON = "cotton"

    def __str__(self) -> str:
        return self.value


class PriceUnit(enum.Enum):
    DOLLARS_PER_BUSHEL = "dollars_per_bushel"
    CENTS_PER_POUND = "cents_per_pound"


# Marketing-year start month per commodity.
_MY_START_MONTH = {
    Commodity.CORN: 9,
    Commodity.SOYBEANS: 9,
    Commodity.WHEAT: 6,
    Commodity.COTTON: 8,
}


@dataclass(frozen=True, order=True)
class MonthStamp:
    """A calendar month, totally ordered by (year, month)."""

    year: int
    month: int

    def __post_init__(self) -> None:
        if not 1 <= self.month <= 12:
            raise CalendarError(f"month must be in 1..12, got {self.month}")

    def add_months(self, n: int) -> "MonthStamp":
        total = self.year * 12 + (self.month - 1) + n
        return MonthStamp(total // 12, total % 12 + 1)

    def months_until(self, other: "MonthStamp") -> int:
        """Signed month distance; other == self.add_months(result)."""
        return (other.year - self.year) * 12 + (other.month - self.month)

    def __str__(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"

    @classmethod
    def parse(cls, text: str) -> "MonthStamp":
        try:
            y, m = text.split("-")
            return cls(int(y), int(m))
        except (ValueError, TypeError) as exc:
            raise CalendarError(f"cannot parse month stamp {text!r}") from exc


@dataclass(frozen=True)
class CommodityCalendar:
    """Per-commodity marketing-year rules: start month and price unit."""

    commodity: Commodity
    my_start_month: int
    unit: PriceUnit

    @classmethod
    def for_commodity(cls, commodity: Commodity) -> "CommodityCalendar":
        unit = (
            PriceUnit.CENTS_PER_POUND
            if commodity is Commodity.COTTON
            else PriceUnit.DOLLARS_PER_BUSHEL
        )
        return cls(commodity, _MY_START_MONTH[commodity], unit)

    def __post_init__(self) -> None:
        if self.my_start_month != _MY_START_MONTH[self.commodity]:
            raise CalendarError(
                f"{self.commodity} marketing year starts in month "
                f"{_MY_START_MONTH[self.commodity]}, not {self.my_start_month}"
            )
        expected_cents = self.commodity is Commodity.COTTON
        if (self.unit is PriceUnit.CENTS_PER_POUND) != expected_cents:
            raise CalendarError(f"unit {self.unit} invalid for {self.commodity}")


@dataclass(frozen=True, order=True)
class MarketingYear:
    """A marketing year, denoted by its starting calendar year."""

    commodity: Commodity = field(compare=False)
    start_year: int

    def __str__(self) -> str:
        return f"{self.commodity} MY {self.start_year}"


class MonthSeries:
    """A contiguous monthly sequence of strictly positive prices.

    Element i carries the stamp ``start + i`` months; gaps are impossible by
    construction and values are validated to be finite and positive.
    """

    __slots__ = ("start", "values")

    def __init__(self, start: MonthStamp, values: Sequence[float]):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise InputError("MonthSeries requires a non-empty 1-d value sequence")
        if not np.all(np.isfinite(arr)):
            raise InputError("MonthSeries values must be finite")
        if np.any(arr <= 0.0):
            bad = int(np.argmax(arr <= 0.0))
            raise InputError(
                f"prices must be strictly positive; value {arr[bad]} at "
                f"{start.add_months(bad)}"
            )
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "values", arr)

    def __setattr__(self, name, value):
        raise AttributeError("MonthSeries is immutable")

    def __len__(self) -> int:
        return int(self.values.size)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, MonthSeries)
            and self.start == other.start
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self):
        return hash((self.start, self.values.tobytes()))

    @property
    def end(self) -> MonthStamp:
        return self.start.add_months(len(self) - 1)

    def stamp_at(self, i: int) -> MonthStamp:
        if not 0 <= i < len(self):
            raise WindowBoundsError(f"index {i} out of range for length {len(self)}")
        return self.start.add_months(i)

    def stamps(self) -> Iterator[MonthStamp]:
        for i in range(len(self)):
            yield self.start.add_months(i)

    def index_of(self, stamp: MonthStamp) -> int:
        i = self.start.months_until(stamp)
        if not 0 <= i < len(self):
            raise WindowBoundsError(f"{stamp} outside series {self.start}..{self.end}")
        return i

    def value_at(self, stamp: MonthStamp) -> float:
        return float(self.values[self.index_of(stamp)])

    def extend(self, more: Sequence[float]) -> "MonthSeries":
        return MonthSeries(self.start, np.concatenate([self.values, more]))

    def __repr__(self) -> str:
        return f"MonthSeries({self.start}..{self.end}, n={len(self)})"


def marketing_year_window(
    cal: CommodityCalendar, my: MarketingYear
) -> Tuple[MonthStamp, MonthStamp]:
    """Inclusive 12-month window for one marketing year.

    Corn MY 2023 -> (Sep 2023, Aug 2024); wheat MY 2020 -> (Jun 2020, May 2021).
    """
    if my.commodity is not cal.commodity:
        raise CalendarError(
            f"marketing year for {my.commodity} does not match calendar "
            f"for {cal.commodity}"
        )
    first = MonthStamp(my.start_year, cal.my_start_month)
    return first, first.add_months(11)


def slice_window(
    series: MonthSeries, window: Tuple[MonthStamp, MonthStamp]
) -> MonthSeries:
    """Contiguous sub-series covering exactly the inclusive window."""
    first, last = window
    if first > last:
        raise WindowBoundsError(f"window start {first} after end {last}")
    if first < series.start or last > series.end:
        raise WindowBoundsError(
            f"window {first}..{last} outside series {series.start}..{series.end}"
        )
    i = series.index_of(first)
    j = series.index_of(last)
    return MonthSeries(first, series.values[i : j + 1])


def month_index_in_my(cal: CommodityCalendar, stamp: MonthStamp) -> int:
    """1-based position of a calendar month inside the marketing year.

    The marketing-year start month maps to 1, the month before the next
    start maps to 12.
    """
    return (stamp.month - cal.my_start_month) % 12 + 1


def my_containing(cal: CommodityCalendar, stamp: MonthStamp) -> MarketingYear:
    """The marketing year whose window contains the given month."""
    start_year = stamp.year if stamp.month >= cal.my_start_month else stamp.year - 1
    return MarketingYear(cal.commodity, start_year)
