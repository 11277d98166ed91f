"""Expanding-window evaluation: splits, metrics, grid search, DM testing.

The protocol walks 16 temporal splits per commodity.  Split s trains on
marketing years 1997 through 1996+9+s, validates on the next two marketing
years, and tests on the one after that, so split 1 tests MY 2009 and split
16 tests MY 2024.  Hyperparameters are chosen on validation RMSE (or by
in-sample information criterion for families that self-select), the model
is refit on train+validation, and only then are the 12 test-month forecasts
emitted; test actuals never enter selection.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from .errors import (
    CoverageError,
    CropcastError,
    DegenerateVarianceError,
    InputError,
    MetricError,
    SelectionError,
)
from .ingest import MarketingWeights
from .timeseries import (
    Commodity,
    CommodityCalendar,
    MarketingYear,
    MonthSeries,
    MonthStamp,
    marketing_year_window,
    slice_window,
)

FIRST_TRAIN_MY = 1997
MIN_TRAIN_YEARS = 10
N_SPLITS = 16
VAL_YEARS = 2
TEST_YEARS = 1


# ---------------------------------------------------------------------------
# splits


@dataclass(frozen=True)
class EvalSplit:
    split_id: int
    commodity: Commodity
    train: Tuple[MonthStamp, MonthStamp]
    validation: Tuple[MonthStamp, MonthStamp]
    test: Tuple[MonthStamp, MonthStamp]

    @property
    def train_months(self) -> int:
        return self.train[0].months_until(self.train[1]) + 1

    @property
    def test_my(self) -> MarketingYear:
        start = self.test[0]
        return MarketingYear(self.commodity, start.year)


def make_splits(
    cal: CommodityCalendar,
    available: Optional[Tuple[MonthStamp, MonthStamp]] = None,
) -> List[EvalSplit]:
    """The 16 expanding-window splits for one commodity.

    ``available`` optionally declares the stamped range the dataset covers;
    any split falling outside raises a coverage error.
    """
    splits = []
    for s in range(1, N_SPLITS + 1):
        train_last_my = FIRST_TRAIN_MY + MIN_TRAIN_YEARS - 2 + s  # 1996+9+s
        train = (
            marketing_year_window(cal, MarketingYear(cal.commodity, FIRST_TRAIN_MY))[0],
            marketing_year_window(cal, MarketingYear(cal.commodity, train_last_my))[1],
        )
        val = (
            marketing_year_window(cal, MarketingYear(cal.commodity, train_last_my + 1))[0],
            marketing_year_window(cal, MarketingYear(cal.commodity, train_last_my + VAL_YEARS))[1],
        )
        test_my = train_last_my + VAL_YEARS + TEST_YEARS
        test = marketing_year_window(cal, MarketingYear(cal.commodity, test_my))
        splits.append(EvalSplit(s, cal.commodity, train, val, test))
    if available is not None:
        lo, hi = available
        for sp in splits:
            if sp.train[0] < lo or sp.test[1] > hi:
                raise CoverageError(
                    f"{cal.commodity} split {sp.split_id} needs "
                    f"{sp.train[0]}..{sp.test[1]} but data covers {lo}..{hi}"
                )
    return splits


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class MetricBlock:
    mae: float
    rmse: float
    mape: float
    smape: float

    def __post_init__(self) -> None:
        if self.mae > self.rmse + 1e-12:
            raise MetricError(f"MAE {self.mae} exceeds RMSE {self.rmse}")


def score_monthly(actual: np.ndarray, forecast: np.ndarray) -> MetricBlock:
    a = np.asarray(actual, dtype=float)
    f = np.asarray(forecast, dtype=float)
    if a.shape != f.shape or a.ndim != 1 or a.size == 0:
        raise InputError("actual and forecast must be equal-length 1-d arrays")
    if np.any(a <= 0):
        raise MetricError("MAPE undefined: actuals must be strictly positive")
    err = a - f
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(np.mean(err * err)))
    mape = float(100.0 * np.mean(np.abs(err) / a))
    smape = float(100.0 * np.mean(np.abs(err) / ((np.abs(a) + np.abs(f)) / 2.0)))
    return MetricBlock(mae=mae, rmse=rmse, mape=mape, smape=smape)


def score_mya(actual_mya: float, forecast_mya: float) -> MetricBlock:
    if actual_mya <= 0:
        raise MetricError("MAPE undefined: actual MYA must be positive")
    err = abs(actual_mya - forecast_mya)
    mape = 100.0 * err / actual_mya
    smape = 100.0 * err / ((abs(actual_mya) + abs(forecast_mya)) / 2.0)
    return MetricBlock(mae=err, rmse=err, mape=mape, smape=smape)


def aggregate_mya(forecast: np.ndarray, weights: MarketingWeights) -> float:
    f = np.asarray(forecast, dtype=float)
    if f.shape != (12,):
        raise InputError(f"MYA aggregation needs 12 monthly values, got {f.shape}")
    return float(f @ weights.w)


def two_step_average(errors_by_commodity: Mapping[Commodity, Sequence[float]]) -> float:
    """Average within each commodity first, then across commodities."""
    means = []
    for commodity, errors in errors_by_commodity.items():
        arr = np.asarray(list(errors), dtype=float)
        if arr.size == 0:
            raise CoverageError(f"no matched years for {commodity}")
        means.append(arr.mean())
    if not means:
        raise CoverageError("no commodities supplied")
    return float(np.mean(means))


def mean_metric_block(blocks: Sequence[MetricBlock]) -> MetricBlock:
    """Equal-weight average of per-cell metric blocks."""
    if not blocks:
        raise InputError("cannot average zero metric blocks")
    return MetricBlock(
        mae=float(np.mean([b.mae for b in blocks])),
        rmse=float(np.mean([b.rmse for b in blocks])),
        mape=float(np.mean([b.mape for b in blocks])),
        smape=float(np.mean([b.smape for b in blocks])),
    )


# ---------------------------------------------------------------------------
# Diebold-Mariano


@dataclass(frozen=True)
class DmResult:
    mean_differential: float
    hac_variance: float  # long-run variance of the differential
    statistic: float
    p_value: float
    n: int
    bandwidth: int


def dm_test(
    loss_a: Sequence[float], loss_b: Sequence[float], bandwidth: int
) -> DmResult:
    """Equal-predictive-accuracy test on the loss differential a - b.

    Uses Bartlett-kernel HAC variance up to ``bandwidth`` lags and a
    two-sided normal p-value.  A positive statistic means the second
    forecast carries lower loss.
    """
    a = np.asarray(loss_a, dtype=float)
    b = np.asarray(loss_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise InputError("loss sequences must be equal-length 1-d arrays")
    n = a.size
    if n < 2:
        raise InputError(f"need at least 2 aligned losses, got {n}")
    if bandwidth < 0:
        raise InputError("bandwidth must be >= 0")
    d = a - b
    dbar = float(d.mean())
    u = d - dbar
    gamma0 = float(u @ u) / n
    hac = gamma0
    for j in range(1, min(bandwidth, n - 1) + 1):
        gamma_j = float(u[j:] @ u[:-j]) / n
        hac += 2.0 * (1.0 - j / (bandwidth + 1.0)) * gamma_j
    hac = max(hac, 0.0)
    if hac == 0.0:
        if dbar == 0.0:
            return DmResult(0.0, 0.0, 0.0, 1.0, n, bandwidth)
        raise DegenerateVarianceError(
            f"zero HAC variance with nonzero mean differential {dbar}"
        )
    stat = dbar / np.sqrt(hac / n)
    p = float(2.0 * (1.0 - norm.cdf(abs(stat))))
    return DmResult(dbar, float(hac), float(stat), p, n, bandwidth)


MONTHLY_DM_BANDWIDTH = 11  # 12-month horizon minus one
MYA_DM_BANDWIDTH = 1       # annual non-overlapping errors


# ---------------------------------------------------------------------------
# ranking and ratio tables


def rank_table(blocks: Mapping[str, MetricBlock]) -> List[Tuple[str, MetricBlock]]:
    """Rows sorted ascending by MAE; ties by RMSE, then name."""
    if not blocks:
        raise InputError("rank table needs at least one model")
    return sorted(blocks.items(), key=lambda kv: (kv[1].mae, kv[1].rmse, kv[0]))


@dataclass(frozen=True)
class RatioRow:
    commodity: Commodity
    model_mae: float
    usda_mae: float
    ratio: float
    outperforms: bool


def ratio_table(
    model_mae: Mapping[Commodity, float], usda_mae: Mapping[Commodity, float]
) -> List[RatioRow]:
    """Per-commodity model MAE relative to the USDA baseline MAE."""
    rows = []
    for commodity, m in model_mae.items():
        if commodity not in usda_mae:
            raise CoverageError(f"no USDA MAE for {commodity}")
        u = usda_mae[commodity]
        if u == 0.0:
            raise MetricError(f"undefined ratio: USDA MAE is zero for {commodity}")
        r = m / u
        rows.append(RatioRow(commodity, float(m), float(u), float(r), bool(r < 1.0)))
    return rows


# ---------------------------------------------------------------------------
# grid search


@dataclass(frozen=True)
class GridSearchResult:
    config: dict
    test_forecasts: np.ndarray
    val_rmse: Optional[float]
    val_scores: tuple
    failures: tuple


def grid_search(
    family,
    grid: Sequence[dict],
    train: MonthSeries,
    validation: MonthSeries,
    h_test: int = 12,
    seed: int = 0,
) -> GridSearchResult:
    """Validation-RMSE selection, then refit on train+validation.

    For each grid point the model fits on the training window alone and
    forecasts the full validation span; the point with minimal validation
    RMSE wins (ties to the earlier grid entry).  The winner refits on the
    combined window and emits ``h_test`` forecasts.  Test actuals are not
    part of the signature by design.
    """
    if not grid:
        raise SelectionError(f"empty grid for {family.name}")
    h_val = len(validation)
    best = None
    failures = []
    scores = []
    for i, config in enumerate(grid):
        try:
            fc = family.fit_forecast(train, config, h_val, seed)
            rmse = float(np.sqrt(np.mean((validation.values - fc) ** 2)))
        except CropcastError as exc:
            failures.append((config, f"{type(exc).__name__}: {exc}"))
            continue
        scores.append((config, rmse))
        if best is None or rmse < best[1]:
            best = (i, rmse, config)
    if best is None:
        detail = "; ".join(f"{c}: {m}" for c, m in failures)
        raise SelectionError(f"all {len(grid)} grid points failed for {family.name}: {detail}")
    combined = MonthSeries(
        train.start, np.concatenate([train.values, validation.values])
    )
    forecasts = family.fit_forecast(combined, best[2], h_test, seed)
    return GridSearchResult(
        config=best[2],
        test_forecasts=np.asarray(forecasts, dtype=float),
        val_rmse=best[1],
        val_scores=tuple(scores),
        failures=tuple(failures),
    )


def evaluate_cell(
    family,
    train: MonthSeries,
    validation: MonthSeries,
    h_test: int = 12,
    seed: int = 0,
) -> GridSearchResult:
    """Run one (model, commodity, split) cell under the family's selection rule."""
    if family.selection == "val_rmse":
        return grid_search(family, family.grid, train, validation, h_test, seed)
    combined = MonthSeries(
        train.start, np.concatenate([train.values, validation.values])
    )
    if family.selection == "auto":
        config = family.auto_select(combined)
    else:
        config = family.grid[0] if family.grid else {}
    forecasts = family.fit_forecast(combined, config, h_test, seed)
    return GridSearchResult(
        config=config,
        test_forecasts=np.asarray(forecasts, dtype=float),
        val_rmse=None,
        val_scores=(),
        failures=(),
    )


def split_series(
    series: MonthSeries, split: EvalSplit
) -> Tuple[MonthSeries, MonthSeries, MonthSeries]:
    """(train, validation, test) sub-series for one split."""
    return (
        slice_window(series, split.train),
        slice_window(series, split.validation),
        slice_window(series, split.test),
    )


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from string-able parts, for per-cell generators."""
    text = ":".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1
