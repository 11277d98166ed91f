"""Seasonal-trend decomposition via iterated loess smoothing.

Inner loop: detrend, smooth each cycle subseries with a loess of window
``n_s`` (extended one cycle at each end), remove the low-pass component of
the smoothed subseries, then re-smooth the deseasonalized series with a
trend loess of window ``n_t``.  Outer loop: bisquare robustness weights on
the remainder.  Two inner and two outer passes in robust mode.

The forecaster repeats the last extracted seasonal cycle and extrapolates
the trend with Holt's linear method.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import InputError
from ..timeseries import MonthSeries
from .ets import _fit_array, ets_forecast

SEASON = 12
N_INNER = 2
N_OUTER = 2


@dataclass(frozen=True)
class StlComponents:
    trend: np.ndarray
    seasonal: np.ndarray
    residual: np.ndarray
    n_s: int
    n_t: int

    @property
    def reconstruction(self) -> np.ndarray:
        return self.trend + self.seasonal + self.residual


def default_trend_window(n_s: int) -> int:
    """Smallest odd integer >= 1.5 * period / (1 - 1.5 / n_s)."""
    raw = 1.5 * SEASON / (1.0 - 1.5 / n_s)
    nt = int(np.ceil(raw))
    return nt if nt % 2 == 1 else nt + 1


def _loess(
    x: np.ndarray,
    v: np.ndarray,
    q: int,
    eval_x: np.ndarray,
    rho: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Locally weighted linear regression with tricube weights.

    When the window q exceeds the number of points, the neighborhood radius
    is inflated by q/m as in the original procedure.
    """
    m = len(x)
    out = np.empty(len(eval_x))
    for i, x0 in enumerate(eval_x):
        d = np.abs(x - x0)
        if q < m:
            lam = np.partition(d, q - 1)[q - 1]
        else:
            lam = d.max() * q / m
        if lam <= 0:
            lam = 1.0
        w = np.clip(1.0 - (d / lam) ** 3, 0.0, None) ** 3
        if rho is not None:
            w = w * rho
        sw = w.sum()
        if sw <= 0:
            # all neighborhood weight suppressed by robustness: fall back to
            # plain tricube so the fit stays defined
            w = np.clip(1.0 - (d / lam) ** 3, 0.0, None) ** 3
            sw = w.sum()
        xc = x - x0
        sx = w @ xc
        sxx = w @ (xc * xc)
        sy = w @ v
        sxy = w @ (xc * v)
        denom = sw * sxx - sx * sx
        if abs(denom) < 1e-12 * max(sxx * sw, 1e-300):
            out[i] = sy / sw
        else:
            beta = (sw * sxy - sx * sy) / denom
            alpha = (sy - beta * sx) / sw
            out[i] = alpha
    return out


def _moving_average(v: np.ndarray, k: int) -> np.ndarray:
    return np.convolve(v, np.full(k, 1.0 / k), mode="valid")


def _low_pass(c: np.ndarray, n: int) -> np.ndarray:
    """MA(12), MA(12), MA(3), then a loess of window 13; length n output."""
    f = _moving_average(_moving_average(_moving_average(c, SEASON), SEASON), 3)
    x = np.arange(n, dtype=float)
    return _loess(x, f, SEASON + 1, x)


def stl_decompose(
    history: MonthSeries,
    n_s: int,
    n_t: Optional[int] = None,
    robust: bool = True,
) -> StlComponents:
    """Decompose into trend + seasonal + residual."""
    y = history.values
    n = len(y)
    if n < 2 * SEASON:
        raise InputError(f"decomposition needs >= {2*SEASON} observations, got {n}")
    if n_s < 7 or n_s % 2 == 0:
        raise InputError(f"seasonal window must be odd and >= 7, got {n_s}")
    if n_t is None:
        n_t = default_trend_window(n_s)
    if n_t % 2 == 0:
        raise InputError(f"trend window must be odd, got {n_t}")
    if n_t > n:
        raise InputError(f"trend window {n_t} longer than series of {n}")

    trend = np.zeros(n)
    seasonal = np.zeros(n)
    rho = np.ones(n)
    x_full = np.arange(n, dtype=float)
    n_outer = N_OUTER if robust else 0

    for outer in range(n_outer + 1):
        for _ in range(N_INNER):
            detrended = y - trend
            # cycle-subseries smoothing, extended one cycle at each end
            c = np.empty(n + 2 * SEASON)
            for p in range(SEASON):
                idx = np.arange(p, n, SEASON)
                sub = detrended[idx]
                xs = np.arange(len(sub), dtype=float)
                eval_xs = np.arange(-1, len(sub) + 1, dtype=float)
                smoothed = _loess(xs, sub, n_s, eval_xs, rho[idx] if outer > 0 else None)
                positions = (p + SEASON * (eval_xs + 1)).astype(int)
                c[positions] = smoothed
            low = _low_pass(c, n)
            seasonal = c[SEASON : SEASON + n] - low
            deseason = y - seasonal
            trend = _loess(x_full, deseason, n_t, x_full, rho if outer > 0 else None)
        residual = y - trend - seasonal
        if outer < n_outer:
            abs_r = np.abs(residual)
            med = np.median(abs_r)
            if med <= 0:
                rho = np.ones(n)
            else:
                u = abs_r / (6.0 * med)
                rho = np.clip(1.0 - u * u, 0.0, None) ** 2
    residual = y - trend - seasonal
    return StlComponents(trend=trend, seasonal=seasonal, residual=residual, n_s=n_s, n_t=n_t)


def stl_forecast(comp: StlComponents, h: int) -> np.ndarray:
    """Repeat the last seasonal cycle; extend the trend by Holt's linear method."""
    if h < 1:
        raise InputError(f"horizon must be >= 1, got {h}")
    last_cycle = comp.seasonal[-SEASON:]
    seasonal_path = last_cycle[np.arange(h) % SEASON]
    holt = _fit_array(comp.trend, "additive", "none")
    trend_path = ets_forecast(holt, h)
    return trend_path + seasonal_path
