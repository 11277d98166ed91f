"""Cell runner: executes (model, commodity, split) cells against a dataset.

Every cell derives its own seed from the global seed and the cell key, so
results are identical whether cells run serially or across a process pool;
aggregation always happens in sorted key order.  Per-cell failures are
recorded in the manifest without aborting the run, and completed cells are
skipped on re-runs unless forced.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .errors import CropcastError
from .evaluation import (
    aggregate_mya,
    derive_seed,
    evaluate_cell,
    make_splits,
    score_monthly,
    split_series,
)
from .ingest import Dataset, forecast_weights, read_normalized
from .models import FAMILIES, family
from .results import CellResult, ResultStore
from .timeseries import Commodity, CommodityCalendar, MarketingYear


@dataclass(frozen=True)
class UsdaWindow:
    """Marketing years used for the baseline comparison tables."""

    first_my: int = 2017
    last_my: int = 2024
    exclude: Tuple[int, ...] = (2020,)
    min_my_by_commodity: Tuple[Tuple[str, int], ...] = (("cotton", 2019),)

    def years_for(self, commodity: Commodity) -> List[int]:
        floor = dict(self.min_my_by_commodity).get(commodity.value, self.first_my)
        return [y for y in range(self.first_my, self.last_my + 1)
                if y not in self.exclude and y >= floor]


@dataclass
class RunConfig:
    data: str = "normalized.csv"
    models: Tuple[str, ...] = ("naive", "seasonal_naive")
    splits: Tuple[int, ...] = tuple(range(1, 17))
    external: Tuple[str, ...] = ()
    out: str = "out"
    seed: int = 42
    workers: int = 1
    force: bool = False
    strict: bool = False
    usda_window: UsdaWindow = field(default_factory=UsdaWindow)

    def __post_init__(self) -> None:
        if len(set(self.models)) != len(self.models):
            raise CropcastError(f"duplicate model names in {self.models}")
        unknown = [m for m in self.models if m not in FAMILIES]
        if unknown:
            raise CropcastError(f"unknown models {unknown}; have {sorted(FAMILIES)}")

    def to_dict(self) -> dict:
        return dict(
            data=str(self.data),
            models=list(self.models),
            splits=list(self.splits),
            external=list(self.external),
            seed=self.seed,
            usda_window=dict(
                first_my=self.usda_window.first_my,
                last_my=self.usda_window.last_my,
                exclude=list(self.usda_window.exclude),
                min_my_by_commodity=dict(self.usda_window.min_my_by_commodity),
            ),
        )

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


@dataclass
class RunManifest:
    version: str
    config_hash: str
    input_digest: str
    cells: Dict[str, dict] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            dict(version=self.version, config_hash=self.config_hash,
                 input_digest=self.input_digest, cells=self.cells),
            indent=2, sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        raw = json.loads(text)
        return cls(raw["version"], raw["config_hash"], raw["input_digest"], raw["cells"])


def _digest_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]


def cell_key(model: str, commodity: Commodity, split_id: int) -> str:
    return f"{model}|{commodity.value}|{split_id}"


def run_one_cell(
    ds: Dataset, model: str, commodity: Commodity, split_id: int, seed: int
) -> CellResult:
    cal = CommodityCalendar.for_commodity(commodity)
    series = ds.price_series(commodity)
    split = [s for s in make_splits(cal) if s.split_id == split_id][0]
    train, validation, test = split_series(series, split)
    cell_seed = derive_seed(seed, model, commodity.value, split_id)
    res = evaluate_cell(family(model), train, validation, 12, cell_seed)
    forecasts = res.test_forecasts
    metrics = score_monthly(test.values, forecasts)
    weights = forecast_weights(ds, cal, split.test_my)
    mya_fc = aggregate_mya(forecasts, weights)
    mya_actual = ds.published_actual(commodity, split.test_my.start_year)
    if mya_actual is None:
        pct = ds.actual_pct(commodity, split.test_my.start_year)
        if pct is not None and not np.any(np.isnan(pct)):
            mya_actual = float(test.values @ (pct / pct.sum()))
        else:
            mya_actual = float(test.values.mean())
    config = res.config
    if "order" in config and hasattr(config["order"], "as_tuple"):
        config = {"order": list(config["order"].as_tuple())}
    return CellResult(
        model=model,
        commodity=commodity,
        split_id=split_id,
        config=config,
        forecasts=np.asarray(forecasts, dtype=float),
        actuals=test.values.copy(),
        mya_forecast=mya_fc,
        mya_actual=float(mya_actual),
        metrics=metrics,
    )


_WORKER_DS: Optional[Dataset] = None


def _init_worker(normalized_path: str) -> None:
    global _WORKER_DS
    records, published = read_normalized(normalized_path)
    _WORKER_DS = Dataset.from_records(records, published)


def _worker_cell(args: tuple):
    model, commodity_value, split_id, seed = args
    commodity = Commodity(commodity_value)
    t0 = time.perf_counter()
    try:
        row = run_one_cell(_WORKER_DS, model, commodity, split_id, seed)
        return (cell_key(model, commodity, split_id), "done", row, None,
                time.perf_counter() - t0)
    except CropcastError as exc:
        return (cell_key(model, commodity, split_id), "failed", None,
                f"{type(exc).__name__}: {exc}", time.perf_counter() - t0)


def run_cells(
    config: RunConfig,
    ds: Dataset,
    store: ResultStore,
    manifest: RunManifest,
    commodities: Optional[Sequence[Commodity]] = None,
) -> Tuple[int, int, int]:
    """Execute all requested cells; returns (done, failed, skipped)."""
    commodities = list(commodities or ds.commodities)
    pending = []
    skipped = 0
    for model in config.models:
        for commodity in commodities:
            for split_id in config.splits:
                key = cell_key(model, commodity, split_id)
                state = manifest.cells.get(key, {}).get("status")
                if state == "done" and not config.force:
                    skipped += 1
                    continue
                pending.append((model, commodity.value, split_id, config.seed))

    outcomes = []
    if config.workers <= 1 or len(pending) <= 1:
        global _WORKER_DS
        _WORKER_DS = ds
        for args in pending:
            outcomes.append(_worker_cell(args))
    else:
        with concurrent.futures.ProcessPoolExecutor(
            max_workers=config.workers,
            initializer=_init_worker,
            initargs=(str(config.data),),
        ) as pool:
            outcomes.extend(pool.map(_worker_cell, pending, chunksize=1))

    done = failed = 0
    for key, status, row, error, seconds in sorted(outcomes, key=lambda o: o[0]):
        entry = {"status": status, "seconds": round(seconds, 3)}
        if error:
            entry["error"] = error
            failed += 1
        else:
            store.add(row)
            done += 1
        manifest.cells[key] = entry
    return done, failed, skipped
