"""cropcast: commodity price forecasting toolkit and benchmark harness.

Implements calendar-aware marketing-year time series, the traditional and
tree-ensemble monthly price forecasters, the USDA futures-plus-basis
season-average price replication, an expanding-window evaluation protocol
with Diebold-Mariano comparison, and a Gaussian-process synthetic benchmark
generator.
"""

__version__ = "0.1.0"

from .timeseries import (
    Commodity,
    CommodityCalendar,
    MarketingYear,
    MonthSeries,
    MonthStamp,
    PriceUnit,
    marketing_year_window,
    month_index_in_my,
    my_containing,
    slice_window,
)

__all__ = [
    "Commodity",
    "CommodityCalendar",
    "MarketingYear",
    "MonthSeries",
    "MonthStamp",
    "PriceUnit",
    "marketing_year_window",
    "month_index_in_my",
    "my_containing",
    "slice_window",
    "__version__",
]
