"""Random-walk and seasonal random-walk baselines."""

from __future__ import annotations

import numpy as np

from ..errors import InputError
from ..timeseries import MonthSeries


def naive_forecast(history: MonthSeries, h: int) -> np.ndarray:
    """Repeat the last observed value for all h horizons."""
    if h < 1:
        raise InputError(f"horizon must be >= 1, got {h}")
    return np.full(h, history.values[-1])


def seasonal_naive_forecast(history: MonthSeries, h: int) -> np.ndarray:
    """Repeat the most recent observed 12-month cycle.

    Horizon j takes the value 12 months before stamp t+j; beyond one year
    the lag source would be a forecast, which equals the same observed
    month again, so the last observed year simply cycles.
    """
    if h < 1:
        raise InputError(f"horizon must be >= 1, got {h}")
    n = len(history)
    if n < 12:
        raise InputError(f"seasonal naive needs >= 12 observations, got {n}")
    last_year = history.values[n - 12 :]
    return np.array([last_year[j % 12] for j in range(h)])
