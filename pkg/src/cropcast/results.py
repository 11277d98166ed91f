"""Persisted per-cell results and summary table rendering.

One row per (model, commodity, split): the selected configuration, the 12
test-month forecasts and actuals, the season-average forecast and actual,
and the monthly metric block.  Summary renderers emit aligned plain text
next to machine-readable CSV.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import ParseError
from .evaluation import MetricBlock, mean_metric_block
from .timeseries import Commodity


@dataclass(frozen=True)
class CellResult:
    model: str
    commodity: Commodity
    split_id: int
    config: dict
    forecasts: np.ndarray       # 12 monthly forecasts
    actuals: np.ndarray         # 12 monthly actuals
    mya_forecast: float
    mya_actual: float
    metrics: MetricBlock

    @property
    def mya_abs_error(self) -> float:
        return abs(self.mya_forecast - self.mya_actual)

    @property
    def ape(self) -> np.ndarray:
        """Monthly absolute percentage errors (fractions of the actual)."""
        return np.abs(self.actuals - self.forecasts) / self.actuals


_HEADER = (
    ["model", "commodity", "split", "config"]
    + [f"f{i:02d}" for i in range(1, 13)]
    + [f"a{i:02d}" for i in range(1, 13)]
    + ["mya_forecast", "mya_actual", "mae", "rmse", "mape", "smape"]
)


class ResultStore:
    """CSV-backed store keyed by (model, commodity, split)."""

    def __init__(self, rows: Optional[Dict[tuple, CellResult]] = None):
        self.rows: Dict[tuple, CellResult] = dict(rows or {})

    def add(self, row: CellResult) -> None:
        self.rows[(row.model, row.commodity, row.split_id)] = row

    def __len__(self) -> int:
        return len(self.rows)

    def models(self) -> List[str]:
        return sorted({k[0] for k in self.rows})

    def cells_for(self, model: str) -> List[CellResult]:
        out = [r for k, r in self.rows.items() if k[0] == model]
        return sorted(out, key=lambda r: (r.split_id, r.commodity.value))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(_HEADER)
            for key in sorted(self.rows, key=lambda k: (k[0], k[1].value, k[2])):
                r = self.rows[key]
                writer.writerow(
                    [r.model, r.commodity.value, r.split_id, json.dumps(r.config, sort_keys=True)]
                    + [repr(float(v)) for v in r.forecasts]
                    + [repr(float(v)) for v in r.actuals]
                    + [repr(float(r.mya_forecast)), repr(float(r.mya_actual)),
                       repr(r.metrics.mae), repr(r.metrics.rmse),
                       repr(r.metrics.mape), repr(r.metrics.smape)]
                )

    @classmethod
    def load(cls, path) -> "ResultStore":
        path = Path(path)
        if not path.exists():
            raise ParseError(f"results file not found: {path}", path=str(path))
        store = cls()
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != _HEADER:
                raise ParseError(f"unexpected results header in {path}", path=str(path))
            for row in reader:
                fc = np.array([float(v) for v in row[4:16]])
                ac = np.array([float(v) for v in row[16:28]])
                store.add(CellResult(
                    model=row[0],
                    commodity=Commodity(row[1]),
                    split_id=int(row[2]),
                    config=json.loads(row[3]),
                    forecasts=fc,
                    actuals=ac,
                    mya_forecast=float(row[28]),
                    mya_actual=float(row[29]),
                    metrics=MetricBlock(float(row[30]), float(row[31]),
                                        float(row[32]), float(row[33])),
                ))
        return store


def overall_metrics(store: ResultStore) -> Dict[str, MetricBlock]:
    """Equal-weight average of the per-cell metric blocks for each model."""
    return {m: mean_metric_block([r.metrics for r in store.cells_for(m)])
            for m in store.models()}


def per_commodity_mae(store: ResultStore) -> Dict[str, Dict[Commodity, float]]:
    out: Dict[str, Dict[Commodity, float]] = {}
    for m in store.models():
        by_c: Dict[Commodity, list] = {}
        for r in store.cells_for(m):
            by_c.setdefault(r.commodity, []).append(r.metrics.mae)
        out[m] = {c: float(np.mean(v)) for c, v in sorted(by_c.items(), key=lambda kv: kv[0].value)}
    return out


def pooled_ape(store: ResultStore, model: str,
               exclude_test_years: Sequence[int] = ()) -> np.ndarray:
    """Monthly APE pooled in (split, commodity, month) lexicographic order."""
    rows = sorted(store.cells_for(model), key=lambda r: (r.split_id, r.commodity.value))
    chunks = []
    for r in rows:
        if r.split_id + 2008 in exclude_test_years:
            continue
        chunks.append(r.ape)
    if not chunks:
        return np.empty(0)
    return np.concatenate(chunks)


# ---------------------------------------------------------------------------
# plain-text rendering


def render_table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    def line(cells):
        return "  ".join(str(c).ljust(w) for c, w in zip(cells, widths)).rstrip()
    sep = "  ".join("-" * w for w in widths)
    return "\n".join([line(headers), sep] + [line(r) for r in rows]) + "\n"


def write_table(directory: Path, name: str, headers: Sequence[str],
                rows: Sequence[Sequence[str]]) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / f"{name}.txt").write_text(render_table(headers, rows), encoding="utf-8")
    with open(directory / f"{name}.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(headers)
        writer.writerows(rows)
