"""Command-line entry point: ingest, run, report, synth, dm.

Exit codes: 0 success, 1 input error, 2 validation failure, 3 partial cell
failures under --strict.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .errors import CropcastError, ParseError
from .evaluation import (
    MYA_DM_BANDWIDTH,
    MONTHLY_DM_BANDWIDTH,
    dm_test,
    ratio_table,
    rank_table,
    score_monthly,
    aggregate_mya,
    make_splits,
    two_step_average,
)
from .external import load_external_forecasts, select_benchmark_vintage
from .ingest import (
    Dataset,
    forecast_weights,
    load_mapping,
    parse_input_csv,
    parse_output_csv,
    read_normalized,
    validate_dataset,
    write_normalized,
)
from .results import (
    CellResult,
    ResultStore,
    overall_metrics,
    per_commodity_mae,
    pooled_ape,
    render_table,
    write_table,
)
from .runner import (
    RunConfig,
    RunManifest,
    UsdaWindow,
    _digest_file,
    run_cells,
    run_one_cell,
)
from .synthetic import (
    CalibrationTargets,
    benchmark_statistics,
    calibrate,
    evaluate_on_benchmark,
    generate_benchmark,
    write_benchmark,
)
from .timeseries import Commodity, CommodityCalendar, MarketingYear

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_VALIDATION = 2
EXIT_PARTIAL = 3


def _load_dataset(path) -> Dataset:
    records, published = read_normalized(path)
    return Dataset.from_records(records, published)


# ---------------------------------------------------------------------------
# ingest


def cmd_ingest(args) -> int:
    mapping = load_mapping(Path(args.mapping) if args.mapping else None)
    out_path = Path(args.normalized_out)
    try:
        records, in_report = parse_input_csv(args.input_csv, mapping)
        published, out_report = ([], None)
        if args.output_csv:
            published, out_report = parse_output_csv(args.output_csv, mapping)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    rejected = len(in_report.rejected) + (len(out_report.rejected) if out_report else 0)
    total = rejected + len(records) + len(published)
    if total and rejected / total > args.max_reject_frac:
        print(f"error: {rejected}/{total} rows rejected exceeds threshold "
              f"{args.max_reject_frac}", file=sys.stderr)
        return EXIT_INPUT

    ds = Dataset.from_records(records, published)
    report = validate_dataset(ds, require_coverage=not args.no_coverage_check)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_normalized(out_path, records, published)
    report_path = out_path.with_suffix(".validation.txt")
    lines = [str(report)]
    if rejected:
        lines.append(f"rejected rows: {rejected}")
        for line_no, reason in (in_report.rejected + (out_report.rejected if out_report else []))[:200]:
            lines.append(f"  line {line_no}: {reason}")
    report_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"accepted {len(records)} records, {len(published)} published rows; "
          f"rejected {rejected}")
    print(f"normalized dataset: {out_path}")
    print(f"validation report: {report_path}")
    if not report.ok:
        print(f"validation failed with {len(report.entries)} findings", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


# ---------------------------------------------------------------------------
# run


def _config_from_args(args) -> RunConfig:
    base: Dict = {}
    if args.config:
        base = json.loads(Path(args.config).read_text(encoding="utf-8"))
    window = base.get("usda_window", {})
    cfg = RunConfig(
        data=args.data or base.get("data", "normalized.csv"),
        models=tuple(args.models.split(",")) if args.models else tuple(base.get("models", ["naive", "seasonal_naive"])),
        splits=tuple(int(s) for s in args.splits.split(",")) if args.splits else tuple(base.get("splits", range(1, 17))),
        external=tuple(args.external or base.get("external", [])),
        out=args.out or base.get("out", "out"),
        seed=args.seed if args.seed is not None else base.get("seed", 42),
        workers=args.workers if args.workers is not None else base.get("workers", 1),
        force=args.force,
        strict=args.strict,
        usda_window=UsdaWindow(
            first_my=window.get("first_my", 2017),
            last_my=window.get("last_my", 2024),
            exclude=tuple(window.get("exclude", (2020,))),
            min_my_by_commodity=tuple(window.get("min_my_by_commodity", {"cotton": 2019}).items()),
        ),
    )
    return cfg


def cmd_run(args) -> int:
    try:
        config = _config_from_args(args)
    except CropcastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    data_path = Path(config.data)
    if not data_path.exists():
        print(f"error: normalized dataset not found: {data_path}", file=sys.stderr)
        return EXIT_INPUT
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds = _load_dataset(data_path)

    manifest_path = out_dir / "manifest.json"
    results_path = out_dir / "results.csv"
    digest = _digest_file(data_path)
    if manifest_path.exists() and not args.force:
        manifest = RunManifest.from_json(manifest_path.read_text(encoding="utf-8"))
        if manifest.config_hash != config.config_hash() or manifest.input_digest != digest:
            print("config or data changed since last run; use --force to redo", file=sys.stderr)
            manifest = RunManifest(__version__, config.config_hash(), digest)
    else:
        manifest = RunManifest(__version__, config.config_hash(), digest)
    store = ResultStore.load(results_path) if results_path.exists() else ResultStore()

    done, failed, skipped = run_cells(config, ds, store, manifest)
    store.save(results_path)
    manifest_path.write_text(manifest.to_json(), encoding="utf-8")
    print(f"cells done: {done}, failed: {failed}, skipped (cached): {skipped}")
    print(f"results: {results_path}")
    print(f"manifest: {manifest_path}")
    if failed and config.strict:
        return EXIT_PARTIAL
    return EXIT_OK


# ---------------------------------------------------------------------------
# report


def usda_baseline_errors(ds: Dataset, window: UsdaWindow) -> Dict[Commodity, Dict[int, float]]:
    """Published-forecast absolute errors per commodity and marketing year."""
    out: Dict[Commodity, Dict[int, float]] = {}
    for commodity in ds.commodities:
        per_year: Dict[int, float] = {}
        for year in window.years_for(commodity):
            my = MarketingYear(commodity, year)
            vintage = select_benchmark_vintage(ds, my)
            if vintage is None:
                continue
            rows = [r for r in ds.published_forecasts(commodity, year) if r.vintage == vintage]
            actual = ds.published_actual(commodity, year)
            if not rows or actual is None:
                continue
            per_year[year] = abs(rows[0].value - actual)
        if per_year:
            out[commodity] = per_year
    return out


def model_mya_errors(store: ResultStore, window: UsdaWindow) -> Dict[str, Dict[Commodity, Dict[int, float]]]:
    out: Dict[str, Dict[Commodity, Dict[int, float]]] = {}
    for model in store.models():
        by_c: Dict[Commodity, Dict[int, float]] = {}
        for r in store.cells_for(model):
            test_my = 2008 + r.split_id
            if test_my not in window.years_for(r.commodity):
                continue
            by_c.setdefault(r.commodity, {})[test_my] = r.mya_abs_error
        out[model] = by_c
    return out


def cmd_report(args) -> int:
    out_dir = Path(args.out)
    results_path = out_dir / "results.csv"
    if not results_path.exists():
        print(f"error: no results at {results_path}", file=sys.stderr)
        return EXIT_INPUT
    store = ResultStore.load(results_path)
    if len(store) == 0:
        print("error: results store is empty", file=sys.stderr)
        return EXIT_INPUT
    tables_dir = out_dir / "tables"

    # external forecasts are merged as extra models when a dataset is given
    ds = _load_dataset(args.data) if args.data else None
    if args.external and ds is None:
        print("error: --external requires --data to score forecasts", file=sys.stderr)
        return EXIT_INPUT
    for path in args.external or []:
        _merge_external(store, load_external_forecasts(path), ds)

    missing = _missing_cells(store)

    # overall ranking
    overall = overall_metrics(store)
    ranked = rank_table(overall)
    rows = [[str(i + 1), name, f"{mb.mae:.3f}", f"{mb.rmse:.3f}", f"{mb.mape:.2f}", f"{mb.smape:.2f}"]
            for i, (name, mb) in enumerate(ranked)]
    write_table(tables_dir, "rankings", ["rank", "model", "mae", "rmse", "mape", "smape"], rows)

    # per-commodity MAE
    byc = per_commodity_mae(store)
    commodities = sorted({c for m in byc.values() for c in m}, key=lambda c: c.value)
    rows = [[m] + [f"{byc[m].get(c, float('nan')):.3f}" for c in commodities]
            for m in sorted(byc)]
    write_table(tables_dir, "by_commodity", ["model"] + [c.value for c in commodities], rows)

    window = UsdaWindow()
    if ds is not None:
        usda = usda_baseline_errors(ds, window)
        usda_mae = {c: float(np.mean(list(v.values()))) for c, v in usda.items()}
        model_errs = model_mya_errors(store, window)
        ratio_rows = []
        for model in sorted(model_errs):
            cells = []
            for c in commodities:
                years = model_errs[model].get(c, {})
                matched = {y: e for y, e in years.items() if c in usda and y in usda[c]}
                if not matched or c not in usda_mae:
                    cells.append("")
                    continue
                model_mae = float(np.mean(list(matched.values())))
                usda_matched = float(np.mean([usda[c][y] for y in matched]))
                r = ratio_table({c: model_mae}, {c: usda_matched})[0]
                flag = "*" if r.outperforms else ""
                cells.append(f"{r.ratio:.2f}{flag}")
            ratio_rows.append([model] + cells)
        write_table(tables_dir, "vs_baseline_ratio",
                    ["model"] + [c.value for c in commodities], ratio_rows)

    # pairwise DM on pooled monthly APE
    models = store.models()
    dm_rows = []
    win_counts = {m: [0, 0] for m in models}
    for a in models:
        for b in models:
            if a >= b:
                continue
            la, lb = pooled_ape(store, a), pooled_ape(store, b)
            n = min(len(la), len(lb))
            if n < 2:
                continue
            r = dm_test(la[:n], lb[:n], MONTHLY_DM_BANDWIDTH)
            better = b if r.statistic > 0 else a
            dm_rows.append([a, b, f"{r.statistic:.3f}", f"{r.p_value:.4f}", better])
            loser = a if better == b else b
            win_counts[better][0] += 1
            if r.p_value < 0.05:
                win_counts[better][1] += 1
    write_table(tables_dir, "dm_pairwise",
                ["model_a", "model_b", "statistic", "p_value", "lower_loss"], dm_rows)
    write_table(tables_dir, "dm_winrate", ["model", "wins", "wins_p05"],
                [[m, str(w[0]), str(w[1])] for m, w in sorted(win_counts.items())])

    print(f"tables written to {tables_dir}")
    if missing:
        print(f"warning: {len(missing)} cells missing: {missing[:5]}...", file=sys.stderr)
        if args.strict:
            return EXIT_PARTIAL
    return EXIT_OK


def _missing_cells(store: ResultStore) -> List[str]:
    missing = []
    for model in store.models():
        have = {(r.commodity, r.split_id) for r in store.cells_for(model)}
        commodities = {c for c, _ in have}
        for c in commodities:
            for s in range(1, 17):
                if (c, s) not in have:
                    missing.append(f"{model}|{c.value}|{s}")
    return missing


def _merge_external(store: ResultStore, external, ds: Dataset) -> None:
    """Score externally produced forecasts exactly like internal cells."""
    from .evaluation import split_series

    for (model, commodity, split_id), forecasts in sorted(
        external.entries.items(), key=lambda kv: (kv[0][0], kv[0][1].value, kv[0][2])
    ):
        cal = CommodityCalendar.for_commodity(commodity)
        series = ds.price_series(commodity)
        split = [s for s in make_splits(cal) if s.split_id == split_id][0]
        _, _, test = split_series(series, split)
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
        store.add(CellResult(
            model=model, commodity=commodity, split_id=split_id, config={},
            forecasts=np.asarray(forecasts, float), actuals=test.values.copy(),
            mya_forecast=mya_fc, mya_actual=float(mya_actual), metrics=metrics,
        ))


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args) -> int:
    out_dir = Path(args.synth_out)
    try:
        specs = calibrate(seed=args.seed, n_draws=args.calibration_draws)
        series, manifest = generate_benchmark(
            specs, n_per_commodity=args.n_series, length=args.length, seed=args.seed
        )
    except CropcastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if getattr(exc, "nearest", None) is not None:
            print(f"nearest miss: {exc.nearest}", file=sys.stderr)
        return EXIT_VALIDATION
    write_benchmark(out_dir, series, manifest)
    stats = benchmark_statistics(series)
    (out_dir / "statistics.json").write_text(json.dumps(stats, indent=2), encoding="utf-8")
    print(f"{len(series)} series written to {out_dir}")
    for k, v in stats.items():
        print(f"  {k}: {v:.4f}" if isinstance(v, float) else f"  {k}: {v}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# dm


def cmd_dm(args) -> int:
    results_path = Path(args.out) / "results.csv"
    if not results_path.exists():
        print(f"error: no results at {results_path}", file=sys.stderr)
        return EXIT_INPUT
    store = ResultStore.load(results_path)
    for m in (args.model_a, args.model_b):
        if m not in store.models():
            print(f"error: model {m!r} not in results ({store.models()})", file=sys.stderr)
            return EXIT_INPUT
    if args.level == "monthly":
        exclude = tuple(int(y) for y in args.exclude.split(",")) if args.exclude else ()
        la = pooled_ape(store, args.model_a, exclude)
        lb = pooled_ape(store, args.model_b, exclude)
        bandwidth = MONTHLY_DM_BANDWIDTH
    else:
        window = UsdaWindow()
        errs = model_mya_errors(store, window)
        pairs = []
        for c in sorted(errs[args.model_a], key=lambda c: c.value):
            for y in sorted(errs[args.model_a][c]):
                if c in errs[args.model_b] and y in errs[args.model_b][c]:
                    pairs.append((errs[args.model_a][c][y], errs[args.model_b][c][y]))
        la = np.array([p[0] for p in pairs])
        lb = np.array([p[1] for p in pairs])
        bandwidth = MYA_DM_BANDWIDTH
    n = min(len(la), len(lb))
    try:
        r = dm_test(la[:n], lb[:n], bandwidth)
    except CropcastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    print(f"n={r.n} bandwidth={r.bandwidth}")
    print(f"mean differential (a-b): {r.mean_differential:.6f}")
    print(f"statistic: {r.statistic:.4f}  p-value: {r.p_value:.4f}")
    better = args.model_b if r.statistic > 0 else args.model_a
    print(f"lower loss: {better}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cropcast",
                                description="commodity price forecasting benchmark")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    pi = sub.add_parser("ingest", help="parse raw files into the normalized dataset")
    pi.add_argument("--input-csv", required=True)
    pi.add_argument("--output-csv")
    pi.add_argument("--mapping", help="column-mapping config (json)")
    pi.add_argument("--normalized-out", default="normalized.csv")
    pi.add_argument("--max-reject-frac", type=float, default=0.10)
    pi.add_argument("--no-coverage-check", action="store_true")
    pi.set_defaults(func=cmd_ingest)

    pr = sub.add_parser("run", help="run models over the expanding-window splits")
    pr.add_argument("--config", help="json run configuration")
    pr.add_argument("--data", help="normalized dataset path")
    pr.add_argument("--models", help="comma-separated model names")
    pr.add_argument("--splits", help="comma-separated split ids (default 1-16)")
    pr.add_argument("--external", action="append", help="external forecast file (repeatable)")
    pr.add_argument("--out", help="output directory")
    pr.add_argument("--seed", type=int)
    pr.add_argument("--workers", type=int)
    pr.add_argument("--force", action="store_true")
    pr.add_argument("--strict", action="store_true")
    pr.set_defaults(func=cmd_run)

    pp = sub.add_parser("report", help="emit summary tables from persisted results")
    pp.add_argument("--out", default="out")
    pp.add_argument("--data", help="normalized dataset (enables baseline ratio table)")
    pp.add_argument("--external", action="append")
    pp.add_argument("--strict", action="store_true")
    pp.set_defaults(func=cmd_report)

    ps = sub.add_parser("synth", help="generate the synthetic benchmark")
    ps.add_argument("--synth-out", default="synthetic")
    ps.add_argument("--n-series", type=int, default=100)
    ps.add_argument("--length", type=int, default=156)
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--calibration-draws", type=int, default=200)
    ps.set_defaults(func=cmd_synth)

    pd = sub.add_parser("dm", help="Diebold-Mariano comparison of two models")
    pd.add_argument("model_a")
    pd.add_argument("model_b")
    pd.add_argument("--out", default="out")
    pd.add_argument("--level", choices=["monthly", "mya"], default="monthly")
    pd.add_argument("--exclude", help="comma-separated test years to drop (monthly)")
    pd.set_defaults(func=cmd_dm)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CropcastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
