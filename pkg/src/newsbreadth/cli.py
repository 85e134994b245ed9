"""
Command-line driver.

    newsbreadth --config run.yaml ingest
    newsbreadth --config run.yaml cluster
    newsbreadth --config run.yaml build-prompts
    newsbreadth --config run.yaml build-dataset
    newsbreadth --config run.yaml evaluate --predictions preds.jsonl
    newsbreadth --config run.yaml report

Exit codes: 0 success, 1 finished with skipped items, 2 configuration error
or hard failure. Every artifact is written under the configured output
directory.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import date, timedelta
from pathlib import Path

from . import __version__
from .clustering import WeekDiagnostics, diagnostics_csv, read_diagnostics_csv
from .config import ConfigError, RunConfig, describe, load_config
from .dataset import (
    HttpChatClient,
    RateLimitedClient,
    RateLimiter,
    RecordingClient,
    ReplayClient,
    TeacherError,
    TeacherSettings,
    export_jsonl,
    generate_examples,
    leakage_audit,
    load_jsonl,
    skip_log_text,
)
from .evaluation import PredictionFileError, evaluate, load_predictions, read_report_csv, report_csv, summary_text
from .market_data import DataGapError, MarketDataError, atomic_write_text, make_window
from .pipeline import build_bundle, cluster_week, target_outcome
from .prompting import PromptError, PromptMode, render

logger = logging.getLogger("newsbreadth")

EXIT_OK, EXIT_PARTIAL, EXIT_FAIL = 0, 1, 2


class HardFailure(Exception):
    pass


# ---------------------------------------------------------------------------
# ingest


def _ingest_ticker(cfg: RunConfig, ticker: str) -> tuple[dict, list[str]]:
    cache = cfg.cache(with_provider=True)
    windows = cfg.windows()
    counts = {"windows": len(windows), "articles": 0, "bars": 0}
    gaps = []
    if not windows:
        return counts, gaps
    cache.fetch_profile(ticker)
    first, last = windows[0], windows[-1]
    optional = [first.shifted(-k) for k in range(cfg.trend_weeks, 1, -1)]
    required = [first.shifted(-1)] + windows + [last.shifted(1)]
    for w in optional + required:
        try:
            counts["bars"] += len(cache.fetch_daily_bars(ticker, w))
        except DataGapError as exc:
            if w in required:
                gaps.append(f"{ticker} {w.label}: {exc}")
    for w in windows:
        counts["articles"] += len(cache.fetch_news(ticker, w))
        cache.fetch_fundamentals(ticker, w)
    return counts, gaps


def cmd_ingest(cfg: RunConfig, args) -> int:
    failures, gaps = [], []
    with ThreadPoolExecutor(max_workers=min(8, len(cfg.tickers))) as pool:
        futures = {t: pool.submit(_ingest_ticker, cfg, t) for t in cfg.tickers}
    for ticker, fut in futures.items():
        try:
            counts, g = fut.result()
        except MarketDataError as exc:
            failures.append(f"{ticker}: {type(exc).__name__}: {exc}")
            print(f"{ticker}: FAILED ({exc})")
            continue
        gaps += g
        print(f"{ticker}: {counts['windows']} windows, {counts['articles']} articles, {counts['bars']} bars")
    for g in gaps:
        print(f"data gap: {g}", file=sys.stderr)
    for f in failures:
        print(f"error: {f}", file=sys.stderr)
    if failures:
        return EXIT_FAIL
    return EXIT_PARTIAL if gaps else EXIT_OK


# ---------------------------------------------------------------------------
# cluster


def _require_cache(cfg: RunConfig, ticker: str) -> None:
    cache = cfg.cache()
    missing = [w.label for w in cfg.windows() if not cache.has_news(ticker, w)]
    if missing:
        raise HardFailure(f"{ticker}: no cached news for {len(missing)} week(s), starting {missing[0]}; run ingest first")


def cluster_rows(cfg: RunConfig, ticker: str) -> list[WeekDiagnostics]:
    _require_cache(cfg, ticker)
    cache, embedder = cfg.cache(), cfg.make_embedder()
    with ThreadPoolExecutor(max_workers=4) as pool:
        weeks = list(pool.map(lambda w: cluster_week(cache, ticker, w, cfg.clustering, embedder), cfg.windows()))
    return [w.diagnostics for w in weeks]


def cmd_cluster(cfg: RunConfig, args) -> int:
    out = cfg.output_dir / "clusters"
    for ticker in cfg.tickers:
        rows = cluster_rows(cfg, ticker)
        path = out / f"{ticker}.csv"
        atomic_write_text(path, diagnostics_csv(rows))
        good = sum(r.good_clusters for r in rows)
        print(f"{ticker}: {len(rows)} weeks, {sum(r.clusters for r in rows)} clusters ({good} high-cohesion) -> {path}")
    return EXIT_OK


def _load_ratios(cfg: RunConfig) -> dict[tuple[str, date], float]:
    """Clustering ratio keyed by (ticker, target week start)."""
    ratios = {}
    for ticker in cfg.tickers:
        path = cfg.output_dir / "clusters" / f"{ticker}.csv"
        if path.exists():
            rows = read_diagnostics_csv(path.read_text(encoding="utf-8"))
        else:
            rows = cluster_rows(cfg, ticker)
        for r in rows:
            ratios[(ticker, r.start_date + timedelta(days=7))] = r.ratio
    return ratios


# ---------------------------------------------------------------------------
# prompts and dataset


def _modes(cfg: RunConfig, args) -> list[PromptMode]:
    if getattr(args, "all_modes", False):
        return list(PromptMode)
    return [cfg.mode]


def cmd_build_prompts(cfg: RunConfig, args) -> int:
    cache, embedder = cfg.cache(), cfg.make_embedder()
    skipped = 0
    written = 0
    for ticker in cfg.tickers:
        _require_cache(cfg, ticker)
        for w in cfg.windows():
            for mode in _modes(cfg, args):
                try:
                    bundle = build_bundle(cache, ticker, w, mode, cfg.clustering, embedder, trend_weeks=cfg.trend_weeks)
                    rendered = render(bundle, cfg.budget)
                except (DataGapError, PromptError) as exc:
                    skipped += 1
                    print(f"skip {ticker} {w.label} {mode.value}: {exc}", file=sys.stderr)
                    continue
                path = cfg.output_dir / "prompts" / ticker / f"{w.start_date.isoformat()}_{mode.value}.txt"
                atomic_write_text(path, rendered.text)
                written += 1
    print(f"{written} prompts written under {cfg.output_dir / 'prompts'}")
    return EXIT_PARTIAL if skipped else EXIT_OK


def make_teacher(cfg: RunConfig):
    t = cfg.teacher
    if t.replay_dir is not None and t.http is None:
        return ReplayClient(t.replay_dir)
    if t.http is None:
        raise ConfigError("teacher: configure replay_dir or http")
    key_env = t.http.get("api_key_env", "OPENAI_API_KEY")
    client = HttpChatClient(t.http.get("base_url", "https://api.openai.com/v1"), os.environ.get(key_env))
    if t.requests_per_minute:
        client = RateLimitedClient(client, RateLimiter(t.requests_per_minute / 60.0, burst=max(1, t.max_in_flight)))
    if t.record_dir is not None:
        client = RecordingClient(client, t.record_dir)
    return client


def dataset_path(cfg: RunConfig) -> Path:
    return cfg.output_dir / "dataset.jsonl"


def cmd_build_dataset(cfg: RunConfig, args) -> int:
    teacher = make_teacher(cfg)
    cache, embedder = cfg.cache(), cfg.make_embedder()
    bundles, skipped = [], []
    for ticker in cfg.tickers:
        _require_cache(cfg, ticker)
        for w in cfg.windows():
            for mode in _modes(cfg, args):
                try:
                    bundles.append(build_bundle(cache, ticker, w, mode, cfg.clustering, embedder, with_ground_truth=True, trend_weeks=cfg.trend_weeks))
                except DataGapError as exc:
                    skipped.append((ticker, w.shifted(1).start_date.isoformat(), f"data gap: {exc}"))
    settings = TeacherSettings(
        model=cfg.teacher.model,
        temperature=cfg.teacher.temperature,
        max_tokens=cfg.teacher.max_tokens,
        max_attempts=cfg.teacher.max_attempts,
    )
    result = generate_examples(bundles, teacher, settings, cfg.budget, cfg.teacher.max_in_flight)
    skipped = sorted(skipped + result.skipped)
    path = export_jsonl(result.examples, dataset_path(cfg))
    atomic_write_text(cfg.output_dir / "skipped.tsv", skip_log_text(skipped))
    leaks = leakage_audit(load_jsonl(path))
    print(f"{len(result.examples)} examples -> {path}; {len(skipped)} skipped")
    if leaks:
        for e in leaks:
            print(f"leak: {e.meta.ticker} {e.meta.target_start} prompt contains {e.meta.actual_label}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_PARTIAL if skipped else EXIT_OK


# ---------------------------------------------------------------------------
# evaluate and report


def _references(cfg: RunConfig) -> dict[str, dict[tuple[str, date], str]]:
    path = dataset_path(cfg)
    refs: dict[str, dict] = {}
    if path.exists():
        for e in load_jsonl(path):
            refs.setdefault(e.meta.mode, {})[(e.meta.ticker, date.fromisoformat(e.meta.target_start))] = e.completion
    return refs


def cmd_evaluate(cfg: RunConfig, args) -> int:
    path = Path(args.predictions)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise HardFailure(f"cannot read predictions: {exc}") from None
    try:
        preds = load_predictions(text, str(path))
    except PredictionFileError as exc:
        for err in exc.errors:
            print(err, file=sys.stderr)
        return EXIT_FAIL
    cache = cfg.cache()
    actuals = {}
    for p in preds:
        key = (p.ticker, p.target_start)
        if key not in actuals:
            actuals[key] = target_outcome(cache, p.ticker, make_window(p.target_start - timedelta(days=7)))[0]
    ratios = _load_ratios(cfg)
    refs = _references(cfg)
    order = [m.value for m in PromptMode]
    modes = sorted({p.mode for p in preds}, key=lambda m: (order.index(m) if m in order else len(order), m))
    try:
        reports = [evaluate(preds, actuals, refs.get(m), ratios, mode=m) for m in modes]
    except ValueError as exc:
        raise HardFailure(str(exc)) from None
    out = cfg.output_dir
    atomic_write_text(out / "report.csv", report_csv(reports))
    summary = "".join(summary_text(r) + "\n" for r in reports)
    atomic_write_text(out / "summary.txt", summary)
    atomic_write_text(
        out / "summary.json",
        json.dumps(
            {
                r.mode: {
                    "n_observations": r.n_observations,
                    "binary_accuracy": r.binary_accuracy,
                    "rouge1": r.rouge1,
                    "rouge2": r.rouge2,
                    "rougeL": r.rougeL,
                    "term_freq": r.term_freq,
                    "case_counts": r.ratio_summary.case_counts if r.ratio_summary else None,
                }
                for r in reports
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
    )
    print(summary, end="")
    return EXIT_OK


def cmd_report(cfg: RunConfig, args) -> int:
    from . import plotting

    path = cfg.output_dir / "report.csv"
    if not path.exists():
        raise HardFailure(f"{path} not found; run evaluate first")
    rows = read_report_csv(path.read_text(encoding="utf-8"))
    fig_dir = cfg.output_dir / "figures"
    written = []
    acc = {}
    for mode in dict.fromkeys(r["mode"] for r in rows):
        mine = [r for r in rows if r["mode"] == mode]
        acc[mode] = sum(int(r["correct"]) for r in mine) / len(mine)
    written.append(plotting.accuracy_figure(acc, fig_dir / "accuracy.png"))
    # HG and HGNC rows carry the same case; plot one of them
    case_mode = next((m for m in ("HGNC", "HG") if any(r["mode"] == m and r["case"] for r in rows)), None)
    case_lines = ["ticker,week_start,ratio,case"]
    for ticker in cfg.tickers:
        weeks = [r for r in rows if r["ticker"] == ticker and r["mode"] == case_mode and r["case"]]
        if weeks:
            written.append(
                plotting.ratio_case_figure(
                    [(date.fromisoformat(r["week_start"]).strftime("%m/%d"), float(r["ratio"] or 0), r["case"]) for r in weeks],
                    f"{ticker}: clustering ratio and HG vs HG-NC outcome",
                    fig_dir / f"{ticker}_ratio_cases.png",
                )
            )
            case_lines += [f"{ticker},{r['week_start']},{r['ratio']},{r['case']}" for r in weeks]
        cpath = cfg.output_dir / "clusters" / f"{ticker}.csv"
        if cpath.exists():
            diag = read_diagnostics_csv(cpath.read_text(encoding="utf-8"))
            written.append(plotting.cluster_stats_figure(diag, f"{ticker}: weekly news clustering", fig_dir / f"{ticker}_clusters.png"))
    atomic_write_text(cfg.output_dir / "cases.csv", "\n".join(case_lines) + "\n")
    for p in written:
        print(p)
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "cluster": cmd_cluster,
    "build-prompts": cmd_build_prompts,
    "build-dataset": cmd_build_dataset,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="newsbreadth", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-c", "--config", required=True, help="run configuration (YAML or JSON)")
    parser.add_argument("--output-dir", help="override output_dir")
    parser.add_argument("--mode", choices=[m.value for m in PromptMode], help="override mode")
    parser.add_argument("--budget", type=int, help="override the prompt token budget")
    parser.add_argument("--tickers", help="override tickers (comma separated)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", help="fetch news, prices and fundamentals into the cache")
    sub.add_parser("cluster", help="cluster each week's news and write diagnostics CSVs")
    p = sub.add_parser("build-prompts", help="render student prompts")
    p.add_argument("--all-modes", action="store_true", help="render Baseline, HG and HGNC")
    p = sub.add_parser("build-dataset", help="generate the instruction-tuning JSONL with the teacher")
    p.add_argument("--all-modes", action="store_true", help="build examples for Baseline, HG and HGNC")
    p = sub.add_parser("evaluate", help="score a predictions file")
    p.add_argument("--predictions", required=True, help="JSONL with ticker, target_start, mode and output or label")
    sub.add_parser("report", help="render figures and the per-week case table")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    overrides = {"output_dir": args.output_dir, "mode": args.mode, "budget": args.budget, "tickers": args.tickers}
    try:
        cfg = load_config(args.config, overrides)
        if args.output_dir:
            cfg.output_dir = Path(args.output_dir).resolve()
        logger.debug("config: %s", describe(cfg))
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, HardFailure, TeacherError, MarketDataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
