"""Forecaster families with their hyperparameter grids and selection rules.

Every family exposes ``fit_forecast(history, config, h, seed)`` returning h
monthly values.  Grid order is fixed so that validation-RMSE ties resolve
to the earlier entry; the seasonal ARIMA family self-selects its order by
information criterion instead of using the validation window.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from ..timeseries import MonthSeries
from .ets import EtsState, ets_fit, ets_forecast
from .naive import naive_forecast, seasonal_naive_forecast
from .ptf import PtfModel, ptf_fit, ptf_forecast
from .sarima import (
    SarimaFit,
    SarimaOrder,
    full_order_grid,
    sarima_fit,
    sarima_forecast,
    sarima_select,
)
from .stl import StlComponents, stl_decompose, stl_forecast
from .trees import (
    BoostSpec,
    ForestSpec,
    build_lag_features,
    fit_tree,
    gbm_fit,
    recursive_forecast,
    rf_fit,
)

__all__ = [
    "ModelFamily", "FAMILIES", "family",
    "naive_forecast", "seasonal_naive_forecast",
    "SarimaOrder", "SarimaFit", "sarima_fit", "sarima_forecast", "sarima_select",
    "full_order_grid",
    "EtsState", "ets_fit", "ets_forecast",
    "StlComponents", "stl_decompose", "stl_forecast",
    "PtfModel", "ptf_fit", "ptf_forecast",
    "ForestSpec", "BoostSpec", "build_lag_features", "fit_tree", "rf_fit",
    "gbm_fit", "recursive_forecast",
]


@dataclass(frozen=True)
class ModelFamily:
    name: str
    grid: tuple
    selection: str  # "val_rmse", "auto", or "none"
    fit_forecast: Callable[[MonthSeries, dict, int, int], np.ndarray]
    auto_select: Optional[Callable[[MonthSeries], dict]] = None


def _naive(history, config, h, seed):
    return naive_forecast(history, h)


def _seasonal_naive(history, config, h, seed):
    return seasonal_naive_forecast(history, h)


def _sarima(history, config, h, seed):
    return sarima_fit(history, config["order"]).forecast(h)


def _sarima_auto(history):
    return {"order": sarima_select(history)}


def _ets(history, config, h, seed):
    state = ets_fit(history, config["trend"], config["seasonal"])
    return ets_forecast(state, h)


def _stl(history, config, h, seed):
    comp = stl_decompose(history, n_s=config["n_s"], n_t=config["n_t"])
    return stl_forecast(comp, h)


def _ptf(history, config, h, seed):
    model = ptf_fit(history, tau=config["tau"], sigma_s=config["sigma_s"],
                    mode=config["mode"], cp_range=config["cp_range"])
    return ptf_forecast(model, h)


def _rf(history, config, h, seed):
    spec = ForestSpec(n_lags=config["n_lags"], n_estimators=config["n_estimators"],
                      max_depth=config["max_depth"], seed=seed)
    return recursive_forecast(rf_fit(history, spec), history, h)


def _gbm(history, config, h, seed):
    spec = BoostSpec(n_lags=config["n_lags"], n_estimators=config["n_estimators"],
                     learning_rate=config["learning_rate"], seed=seed)
    return recursive_forecast(gbm_fit(history, spec), history, h)


def _ets_grid() -> tuple:
    return tuple(
        {"trend": t, "seasonal": s}
        for t, s in itertools.product(
            ("additive", "multiplicative", "none"),
            ("additive", "multiplicative", "none"),
        )
    )


def _stl_grid() -> tuple:
    return tuple(
        {"n_s": ns, "n_t": nt}
        for ns, nt in itertools.product((7, 13, 25, 35), (None, 13, 25, 51))
    )


def _ptf_grid() -> tuple:
    return tuple(
        {"tau": tau, "sigma_s": ss, "mode": mode, "cp_range": cr}
        for tau, ss, mode, cr in itertools.product(
            (0.001, 0.01, 0.05, 0.1, 0.5, 1.0),
            (0.01, 0.1, 1.0, 10.0, 20.0),
            ("additive", "multiplicative"),
            (0.8, 0.9, 0.95),
        )
    )


def _rf_grid() -> tuple:
    return tuple(
        {"n_lags": L, "n_estimators": K, "max_depth": depth}
        for L, K, depth in itertools.product((6, 12, 18), (100, 200), (10, 15, 20))
    )


def _gbm_grid() -> tuple:
    return tuple(
        {"n_lags": L, "n_estimators": K, "learning_rate": lr}
        for L, K, lr in itertools.product((6, 12, 18), (100, 200), (0.05, 0.1))
    )


FAMILIES = {
    "naive": ModelFamily("naive", ({},), "none", _naive),
    "seasonal_naive": ModelFamily("seasonal_naive", ({},), "none", _seasonal_naive),
    "sarima": ModelFamily("sarima", (), "auto", _sarima, _sarima_auto),
    "ets": ModelFamily("ets", _ets_grid(), "val_rmse", _ets),
    "stl": ModelFamily("stl", _stl_grid(), "val_rmse", _stl),
    "ptf": ModelFamily("ptf", _ptf_grid(), "val_rmse", _ptf),
    "random_forest": ModelFamily("random_forest", _rf_grid(), "val_rmse", _rf),
    "gbm": ModelFamily("gbm", _gbm_grid(), "val_rmse", _gbm),
}

TRADITIONAL = ("naive", "seasonal_naive", "sarima", "ets", "stl", "ptf")
MACHINE_LEARNING = ("random_forest", "gbm")


def family(name: str) -> ModelFamily:
    if name not in FAMILIES:
        raise KeyError(f"unknown model family {name!r}; have {sorted(FAMILIES)}")
    return FAMILIES[name]
