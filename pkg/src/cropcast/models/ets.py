"""Holt-Winters exponential smoothing with additive/multiplicative variants.

Level, trend, and seasonal states update recursively with smoothing weights
alpha, beta, gamma in [0,1]; the weights are chosen to minimize in-sample
one-step squared error by a coarse grid plus bounded local polish.

Initialization follows the classical startup: level and trend from a
regression on the first 24 observations (deseasonalized when a seasonal
component is present), seasonal states from first-two-years averages. The
no-trend/no-seasonal variant starts the level at the first observation so
the recursion is exactly simple exponential smoothing.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import minimize

from ..errors import InputError
from ..timeseries import MonthSeries

SEASON = 12
TREND_TYPES = ("none", "additive", "multiplicative")
SEASONAL_TYPES = ("none", "additive", "multiplicative")


@dataclass(frozen=True)
class EtsState:
    level: float
    trend: float
    seasonals: Optional[np.ndarray]  # indexed by cycle position of series start
    alpha: float
    beta: float
    gamma: float
    trend_type: str
    seasonal_type: str
    n_obs: int
    sse: float

    def forecast(self, h: int) -> np.ndarray:
        return ets_forecast(self, h)


def _validate_types(trend_type: str, seasonal_type: str) -> None:
    if trend_type not in TREND_TYPES:
        raise InputError(f"trend_type must be one of {TREND_TYPES}")
    if seasonal_type not in SEASONAL_TYPES:
        raise InputError(f"seasonal_type must be one of {SEASONAL_TYPES}")


def _initial_seasonals(y: np.ndarray, seasonal_type: str) -> np.ndarray:
    """Per-position seasonal startup from the first two whole years.

    The two years are detrended with their own least-squares line first so a
    pure trend contributes nothing to the seasonal states.
    """
    s = np.zeros(SEASON) if seasonal_type == "additive" else np.ones(SEASON)
    if seasonal_type == "none":
        return s
    head = y[: 2 * SEASON]
    t = np.arange(2 * SEASON, dtype=float)
    b, a = np.polyfit(t, head, 1)
    line = a + b * t
    if seasonal_type == "additive":
        dev = (head - line).reshape(2, SEASON)
        s = dev.mean(axis=0)
        s = s - s.mean()
    else:
        if np.any(line <= 0):
            raise InputError("multiplicative seasonality requires positive data")
        ratio = (head / line).reshape(2, SEASON)
        s = ratio.mean(axis=0)
        s = s / s.mean()
    return s


def _initial_level_trend(
    y: np.ndarray, trend_type: str, seasonal_type: str, seasonals: np.ndarray
) -> Tuple[float, float]:
    if trend_type == "none" and seasonal_type == "none":
        return float(y[0]), 0.0
    m = min(2 * SEASON, len(y))
    if seasonal_type == "additive":
        z = y[:m] - np.resize(seasonals, m)
    elif seasonal_type == "multiplicative":
        z = y[:m] / np.resize(seasonals, m)
    else:
        z = y[:m]
    t = np.arange(1, m + 1, dtype=float)
    if trend_type == "none":
        return float(z.mean()), 0.0
    if trend_type == "additive":
        b, a = np.polyfit(t, z, 1)
        return float(a), float(b)
    if np.any(z <= 0):
        raise InputError("multiplicative trend requires positive data")
    b, a = np.polyfit(t, np.log(z), 1)
    return float(np.exp(a)), float(np.exp(b))


def _run_recursion(
    y: np.ndarray,
    alpha: float,
    beta: float,
    gamma: float,
    trend_type: str,
    seasonal_type: str,
    level0: float,
    trend0: float,
    seasonals0: np.ndarray,
) -> Tuple[float, float, np.ndarray, float]:
    """One pass over the data; returns final states and one-step SSE."""
    level, trend = level0, trend0
    s = seasonals0.copy()
    sse = 0.0
    start = 1 if (trend_type == "none" and seasonal_type == "none") else 0
    for t in range(start, len(y)):
        if trend_type == "multiplicative":
            base = level * trend
        else:
            base = level + trend
        pos = t % SEASON
        if seasonal_type == "additive":
            fc = base + s[pos]
        elif seasonal_type == "multiplicative":
            fc = base * s[pos]
        else:
            fc = base
        err = y[t] - fc
        sse += err * err
        prev_level = level
        if seasonal_type == "additive":
            level = alpha * (y[t] - s[pos]) + (1 - alpha) * base
        elif seasonal_type == "multiplicative":
            level = alpha * (y[t] / s[pos]) + (1 - alpha) * base
        else:
            level = alpha * y[t] + (1 - alpha) * base
        if trend_type == "additive":
            trend = beta * (level - prev_level) + (1 - beta) * trend
        elif trend_type == "multiplicative":
            ratio = level / prev_level if prev_level != 0.0 else 1.0
            trend = beta * ratio + (1 - beta) * trend
        if seasonal_type == "additive":
            s[pos] = gamma * (y[t] - level) + (1 - gamma) * s[pos]
        elif seasonal_type == "multiplicative":
            denom = level if level != 0.0 else 1.0
            s[pos] = gamma * (y[t] / denom) + (1 - gamma) * s[pos]
    return level, trend, s, sse


def ets_fit(
    history: MonthSeries,
    trend_type: str = "additive",
    seasonal_type: str = "additive",
    smoothing: Optional[Tuple[float, float, float]] = None,
) -> EtsState:
    """Fit by minimizing one-step SSE over (alpha, beta, gamma) in [0,1]^3.

    ``smoothing`` pins the weights instead of optimizing (used by tests and
    by the trend extrapolation inside the decomposition forecaster).
    """
    _validate_types(trend_type, seasonal_type)
    y = history.values
    n = len(y)
    if seasonal_type != "none" and n < 2 * SEASON:
        raise InputError(f"seasonal smoothing needs >= {2*SEASON} observations, got {n}")
    if (trend_type == "multiplicative" or seasonal_type == "multiplicative") and np.any(
        y <= 0
    ):
        raise InputError("multiplicative components require strictly positive data")
    return _fit_array(y, trend_type, seasonal_type, smoothing)


def _fit_array(
    y: np.ndarray,
    trend_type: str,
    seasonal_type: str,
    smoothing: Optional[Tuple[float, float, float]] = None,
) -> EtsState:
    seasonals0 = _initial_seasonals(y, seasonal_type)
    level0, trend0 = _initial_level_trend(y, trend_type, seasonal_type, seasonals0)
    if trend_type == "multiplicative" and trend0 == 0.0:
        trend0 = 1.0

    use_beta = trend_type != "none"
    use_gamma = seasonal_type != "none"

    def sse_at(alpha: float, beta: float, gamma: float) -> float:
        return _run_recursion(
            y, alpha, beta, gamma, trend_type, seasonal_type, level0, trend0, seasonals0
        )[3]

    if smoothing is not None:
        alpha, beta, gamma = smoothing
    else:
        # coarse deterministic grid, then bounded polish from the best point
        alphas = (0.05, 0.2, 0.5, 0.8)
        betas = (0.01, 0.1, 0.3) if use_beta else (0.0,)
        gammas = (0.01, 0.1, 0.3) if use_gamma else (0.0,)
        best = min(
            itertools.product(alphas, betas, gammas),
            key=lambda abg: sse_at(*abg),
        )
        free_idx = [0] + ([1] if use_beta else []) + ([2] if use_gamma else [])

        def objective(x: np.ndarray) -> float:
            full = [best[0], best[1], best[2]]
            for j, i in enumerate(free_idx):
                full[i] = x[j]
            return sse_at(*full)

        x0 = np.array([best[i] for i in free_idx])
        res = minimize(
            objective,
            x0,
            method="L-BFGS-B",
            bounds=[(1e-4, 1.0)] + [(0.0, 1.0)] * (len(free_idx) - 1),
        )
        x_best = res.x if res.fun <= objective(x0) else x0
        full = [best[0], best[1], best[2]]
        for j, i in enumerate(free_idx):
            full[i] = float(x_best[j])
        alpha, beta, gamma = full
        if not use_beta:
            beta = 0.0
        if not use_gamma:
            gamma = 0.0

    level, trend, s, sse = _run_recursion(
        y, alpha, beta, gamma, trend_type, seasonal_type, level0, trend0, seasonals0
    )
    return EtsState(
        level=float(level),
        trend=float(trend),
        seasonals=s if seasonal_type != "none" else None,
        alpha=float(alpha),
        beta=float(beta),
        gamma=float(gamma),
        trend_type=trend_type,
        seasonal_type=seasonal_type,
        n_obs=len(y),
        sse=float(sse),
    )


def ets_forecast(state: EtsState, h: int) -> np.ndarray:
    """Level plus extrapolated trend plus the cycling recent seasonal states."""
    if h < 1:
        raise InputError(f"horizon must be >= 1, got {h}")
    steps = np.arange(1, h + 1, dtype=float)
    if state.trend_type == "multiplicative":
        base = state.level * state.trend**steps
    else:
        base = state.level + steps * state.trend
    if state.seasonal_type == "none":
        return base
    pos = (state.n_obs + np.arange(h)) % SEASON
    seas = state.seasonals[pos]
    if state.seasonal_type == "additive":
        return base + seas
    return base * seas
