"""Shared fixtures data: the BA weekly clustering table and fixture builders."""

from __future__ import annotations

import json
import random
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

import yaml

from newsbreadth import cli
from newsbreadth.clustering import Cohesion, SelectedTopic
from newsbreadth.dataset import RecordingClient
from newsbreadth.labeling import Direction, MovementLabel, daily_returns, movement_label
from newsbreadth.market_data import DailyBar, FundamentalsSnapshot, MarketDataCache, NewsArticle, make_window
from newsbreadth.pipeline import target_outcome
from newsbreadth.prompting import PromptBundle, PromptMode, WeeklyMove
from newsbreadth.synthetic import ScriptedTeacher, TickerSpec, WeekPlan, plan_from_counts, random_plans, scripted_analysis, write_fixture

# Boeing weekly news clustering statistics, 2024/5/26 - 2024/9/29:
# (week start, news, clusters, good clusters, clustered news, ratio)
BA_TABLE = [
    (date(2024, 5, 26), 74, 2, 0, 0, 0.00),
    (date(2024, 6, 2), 76, 4, 1, 3, 0.04),
    (date(2024, 6, 9), 77, 5, 1, 14, 0.18),
    (date(2024, 6, 16), 118, 9, 5, 78, 0.66),
    (date(2024, 6, 23), 135, 6, 3, 50, 0.37),
    (date(2024, 6, 30), 110, 6, 2, 55, 0.50),
    (date(2024, 7, 7), 87, 7, 4, 52, 0.60),
    (date(2024, 7, 14), 69, 7, 3, 36, 0.52),
    (date(2024, 7, 21), 102, 2, 1, 9, 0.09),
    (date(2024, 7, 28), 109, 4, 2, 31, 0.28),
    (date(2024, 8, 4), 70, 4, 2, 36, 0.51),
    (date(2024, 8, 11), 68, 4, 1, 17, 0.25),
    (date(2024, 8, 18), 63, 2, 1, 28, 0.44),
    (date(2024, 8, 25), 67, 9, 5, 42, 0.63),
    (date(2024, 9, 1), 78, 3, 2, 45, 0.58),
    (date(2024, 9, 8), 139, 8, 5, 80, 0.58),
    (date(2024, 9, 15), 124, 9, 9, 91, 0.73),
    (date(2024, 9, 22), 120, 7, 3, 37, 0.31),
    (date(2024, 9, 29), 84, 2, 1, 27, 0.32),
]

BA_START = date(2024, 5, 26)
# last news week opens 9/29, so the inclusive range runs through its Saturday
BA_END = date(2024, 10, 5)

BA_SPEC = TickerSpec("BA", "Boeing Company")

# Constructed HG vs HG-NC outcome per news week (the published figure is not
# available as data). Case1 weeks all sit above a 0.5 ratio, Case2 weeks below 0.4.
BA_CASE1 = {date(2024, 6, 16), date(2024, 7, 7), date(2024, 7, 14), date(2024, 8, 25), date(2024, 9, 1), date(2024, 9, 8), date(2024, 9, 15)}
BA_CASE2 = {date(2024, 6, 2), date(2024, 6, 23), date(2024, 7, 28), date(2024, 8, 11), date(2024, 9, 22)}
BA_BOTH_WRONG = {date(2024, 6, 30), date(2024, 8, 18)}


def ba_plans() -> list[WeekPlan]:
    return [plan_from_counts(start, news, clusters, good, clustered) for start, news, clusters, good, clustered, _ in BA_TABLE]


def write_ba_fixture(root: Path) -> Path:
    write_fixture(root, BA_SPEC, ba_plans(), seed=1)
    return root


MULTI_TICKERS = [
    ("AAPL", "Apple Inc"), ("MSFT", "Microsoft Corp"), ("AMZN", "Amazon.com Inc"), ("GOOGL", "Alphabet Inc"),
    ("META", "Meta Platforms"), ("NVDA", "NVIDIA Corp"), ("TSLA", "Tesla Inc"), ("JPM", "JPMorgan Chase"),
    ("V", "Visa Inc"), ("JNJ", "Johnson & Johnson"), ("WMT", "Walmart Inc"), ("PG", "Procter & Gamble"),
    ("XOM", "Exxon Mobil"), ("UNH", "UnitedHealth Group"), ("HD", "Home Depot"), ("DIS", "Walt Disney"),
    ("NFLX", "Netflix Inc"), ("INTC", "Intel Corp"), ("PFE", "Pfizer Inc"), ("BA", "Boeing Company"),
]


def write_multi_fixture(root: Path, weeks: int = 19) -> Path:
    """Twenty tickers over the BA date range with small randomized weeks."""
    for i, (ticker, name) in enumerate(MULTI_TICKERS):
        spec = TickerSpec(ticker, name, start_price=40.0 + 17 * i, daily_vol=0.012 + 0.001 * (i % 7))
        write_fixture(root, spec, random_plans(BA_START, weeks, seed=7, ticker=ticker), seed=7)
    return root


def write_config(path: Path, fixture_dir: Path, output_dir: Path, tickers=("BA",), **extra) -> Path:
    cfg = {
        "tickers": list(tickers),
        "start": BA_START.isoformat(),
        "end": BA_END.isoformat(),
        "mode": "HGNC",
        "output_dir": str(output_dir),
        "market_data": {"fixture_dir": str(fixture_dir)},
        "teacher": {"replay_dir": str(path.parent / "cassettes"), "model": "teacher-test", "max_in_flight": 4},
    }
    cfg.update(extra)
    path.write_text(yaml.safe_dump(cfg, sort_keys=False), encoding="utf-8")
    return path


def flip(label: MovementLabel) -> MovementLabel:
    other = Direction.DOWN if label.direction is Direction.UP else Direction.UP
    return MovementLabel(other, label.band)


def ba_case_predictions(actuals: dict[date, MovementLabel]) -> list[dict]:
    """HG and HGNC prediction records over the BA weeks realizing the constructed cases.

    ``actuals`` maps news-week start to the label of the following week.
    HGNC is right on 12 of 19 weeks and HG on 10 of 19.
    """
    rows = []
    for start in sorted(actuals):
        actual = actuals[start]
        hgnc_ok = start not in BA_CASE2 and start not in BA_BOTH_WRONG
        hg_ok = start not in BA_CASE1 and start not in BA_BOTH_WRONG
        target = (start + timedelta(days=7)).isoformat()
        for mode, ok in (("HG", hg_ok), ("HGNC", hgnc_ok)):
            label = actual if ok else flip(actual)
            text = scripted_analysis(label, "+1.00", [f"{mode} headline {start}"], random.Random(f"{mode}{start}"))
            rows.append({"ticker": "BA", "target_start": target, "mode": mode, "output": text})
    return rows


def record_cassettes(config: Path, *argv: str, flaky: float = 0.0) -> int:
    """Run ``build-dataset`` once with the scripted teacher, recording into the replay directory."""
    original = cli.make_teacher
    cli.make_teacher = lambda cfg: RecordingClient(ScriptedTeacher(flaky=flaky), cfg.teacher.replay_dir)
    try:
        return cli.main(["-c", str(config), *argv, "build-dataset"])
    finally:
        cli.make_teacher = original


def ba_actuals(cache_dir: Path) -> dict[date, MovementLabel]:
    """Label of the week after each BA news week, read from a populated cache."""
    cache = MarketDataCache(cache_dir)
    return {row[0]: target_outcome(cache, "BA", make_window(row[0]))[0] for row in BA_TABLE}


def write_jsonl(path: Path, rows: list[dict]) -> Path:
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# Random bundles


def random_bundle(rng: random.Random, mode: PromptMode, with_truth: bool = False) -> PromptBundle:
    window = make_window(date(2024, 1, 7) + timedelta(weeks=rng.randint(0, 50)))
    price = rng.uniform(5, 500)
    trend = []
    for k in range(rng.randint(1, 4), 0, -1):
        new = price * (1 + rng.uniform(-0.08, 0.08))
        trend.append(WeeklyMove(window.shifted(-k + 1), price, new))
        price = new
    daily = None
    if mode is not PromptMode.BASELINE:
        closes = [round(trend[-1].prior_close * (1 + rng.uniform(-0.03, 0.03)), 2) for _ in window.trading_dates]
        bars = [DailyBar("X", d, c) for d, c in zip(window.trading_dates, closes)]
        daily = daily_returns(bars, trend[-1].prior_close)

    def text(n):
        return " ".join(rng.choice(["orders", "jet", "strike", "union", "guidance", "cash", "Q2", "FAA", "delay"]) for _ in range(n))

    n_news = rng.choice([0, 1, 5, 20, 80, 300])
    arts = [
        NewsArticle(
            f"a{i:04d}",
            "X",
            datetime.combine(window.start_date, datetime.min.time(), tzinfo=timezone.utc) + timedelta(minutes=rng.randint(0, 7 * 1440 - 1)),
            text(rng.randint(3, 15)),
            text(rng.randint(0, 60)),
        )
        for i in range(n_news)
    ]
    if mode is PromptMode.HGNC:
        n_high = rng.randint(0, min(12, n_news))
        news = tuple(
            SelectedTopic(a, rng.randint(2, 40) if i < n_high else rng.randint(1, 2), rng.randint(0, 6), Cohesion.HIGH if i < n_high else Cohesion.LOW)
            for i, a in enumerate(arts[: n_high + min(4, n_news - n_high)])
        )
    else:
        news = tuple(arts)
    fundamentals = None
    if rng.random() < 0.7:
        fundamentals = FundamentalsSnapshot("X", window.start_date - timedelta(days=40), {"revenue": rng.uniform(1e8, 1e11), "epsBasic": rng.uniform(-3, 5)})
    label = ret = None
    if with_truth:
        ret = rng.uniform(-0.1, 0.1)
        label = movement_label(ret)
    return PromptBundle(
        ticker="X",
        company_intro="X Corp (X) makes things. " * rng.randint(1, 5),
        mode=mode,
        context_window=window,
        target_window=window.shifted(1),
        weekly_trend=tuple(trend),
        daily=daily,
        news=news,
        fundamentals=fundamentals,
        ground_truth_label=label,
        ground_truth_return=ret,
    )
