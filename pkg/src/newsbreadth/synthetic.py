"""
Deterministic synthetic market data and an offline teacher, for tests and demos.

``write_fixture`` produces a fixture directory (see ``market_data``) for one
ticker from a list of ``WeekPlan`` objects. Each planned week is drawn so the
reference clusterer with the hashing embedder finds exactly the planned
High- and Low-cohesion clusters: topic articles share a core vocabulary,
filler words are unique pseudo-words, and a week is redrawn until its
clustering matches the plan.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta, timezone
from pathlib import Path
from typing import Sequence

from .clustering import ClusteringParams, Cohesion, cluster_topics
from .embedding import HashingEmbedder
from .evaluation import HEADERS
from .labeling import MovementLabel, find_label
from .market_data import (
    DailyBar,
    FundamentalsSnapshot,
    NewsArticle,
    WeeklyWindow,
    atomic_write_text,
    dump_bars,
    dump_fundamentals,
    dump_news,
    make_window,
)
from .dataset import LlmRequest, LlmResponse

_CONSONANTS = "bcdfghjklmnprstvz"
_VOWELS = "aeiou"

DOMAIN_WORDS = """
aircraft airline airplane analyst approval assembly audit backlog bond capital capacity cargo
cash certification contract cost credit customer debt defense delay delivery demand design
dividend earnings engine engineer estimate executive factory federal filing fleet forecast
freight fuel guidance hiring incident inspection investigation investor jet labor lawsuit
lease leadership liquidity machinist margin merger mission narrative negotiation office
order outlook pension pilot plant production profit program quality quarter rating recall
regulator repair revenue rocket safety satellite schedule settlement shareholder shipment
space spacecraft strike supplier supply tanker testing tariff union upgrade valuation
vote wage warranty widebody workforce inventory software chip cloud datacenter subscription
retail store pharmacy trial vaccine patent royalty refinery pipeline drilling battery vehicle
charging autonomy streaming advertising payment wallet lending deposit branch reserve
""".split()


def pseudo_word(rng: random.Random, used: set[str]) -> str:
    """A fresh pronounceable nonsense word (letters only, never reused)."""
    while True:
        w = "".join(rng.choice(_CONSONANTS) + rng.choice(_VOWELS) for _ in range(3))
        if w not in used:
            used.add(w)
            return w


@dataclass(frozen=True)
class WeekPlan:
    start: date
    news_count: int
    high_sizes: tuple[int, ...] = ()
    low_sizes: tuple[int, ...] = ()

    @property
    def clustered(self) -> int:
        return sum(self.high_sizes)

    def __post_init__(self):
        if any(s < 2 for s in self.high_sizes + self.low_sizes):
            raise ValueError("planned clusters need at least two articles")
        if self.clustered + sum(self.low_sizes) > self.news_count:
            raise ValueError(f"{self.start}: planned cluster members exceed the news count")


def split_evenly(total: int, parts: int) -> tuple[int, ...]:
    """``total`` split into ``parts`` near-equal sizes, largest first."""
    if parts == 0:
        return ()
    base, extra = divmod(total, parts)
    return tuple(base + (1 if i < extra else 0) for i in range(parts))


def plan_from_counts(start: date, news: int, clusters: int, good: int, clustered: int, low_size: int = 3) -> WeekPlan:
    """Week plan matching a (news, clusters, good clusters, clustered news) diagnostics row."""
    return WeekPlan(start, news, split_evenly(clustered, good), (low_size,) * (clusters - good))


@dataclass
class TickerSpec:
    ticker: str
    name: str
    industry: str = "Aerospace & Defense"
    exchange: str = "NEW YORK STOCK EXCHANGE, INC."
    market_cap: float = 110_000.0
    start_price: float = 180.0
    daily_vol: float = 0.015
    quarterly_releases: tuple[date, ...] = (date(2024, 1, 31), date(2024, 4, 24), date(2024, 7, 31), date(2024, 10, 23))
    extra: dict = field(default_factory=dict)

    @property
    def company_token(self) -> str:
        return re.sub(r"[^a-z0-9]", "", self.name.split()[0].lower())


def _timestamp(rng: random.Random, window: WeeklyWindow, day_lo: int, day_hi: int) -> datetime:
    day = window.start_date + timedelta(days=rng.randint(day_lo, day_hi))
    seconds = rng.randint(6 * 3600, 22 * 3600)
    return datetime.combine(day, time(), tzinfo=timezone.utc) + timedelta(seconds=seconds)


def _article(rng, used, spec: TickerSpec, idx: str, window, core: list[str], n_unique: int, day_lo: int, day_hi: int) -> NewsArticle:
    words = list(core) + [pseudo_word(rng, used) for _ in range(n_unique)]
    rng.shuffle(words)
    cut = max(1, len(words) // 2)
    headline = spec.name.split()[0] + " " + " ".join(words[:cut])
    summary = " ".join(words[cut:]).capitalize() + "."
    return NewsArticle(idx, spec.ticker, _timestamp(rng, window, day_lo, day_hi), headline, summary)


def draw_week(spec: TickerSpec, plan: WeekPlan, rng: random.Random) -> list[NewsArticle]:
    window = make_window(plan.start)
    used: set[str] = set()
    vocab = list(DOMAIN_WORDS)
    rng.shuffle(vocab)
    articles: list[NewsArticle] = []
    counter = iter(range(10_000))

    def next_id():
        return f"{spec.ticker}-{plan.start:%Y%m%d}-{next(counter):04d}"

    for size in plan.high_sizes:
        core = [pseudo_word(rng, used) for _ in range(7)] + [vocab.pop() for _ in range(3)]
        lo = rng.randint(0, 6)
        hi = rng.randint(lo, 6)
        articles += [_article(rng, used, spec, next_id(), window, core, 2, lo, hi) for _ in range(size)]
    for size in plan.low_sizes:
        core = [pseudo_word(rng, used) for _ in range(3)] + [vocab.pop() for _ in range(2)]
        lo = rng.randint(0, 6)
        hi = rng.randint(lo, 6)
        articles += [_article(rng, used, spec, next_id(), window, core, 5, lo, hi) for _ in range(size)]
    while len(articles) < plan.news_count:
        articles.append(_article(rng, used, spec, next_id(), window, [], 9, 0, 6))
    return articles


def week_matches(plan: WeekPlan, articles: Sequence[NewsArticle], params: ClusteringParams, embedder: HashingEmbedder) -> bool:
    clusters = cluster_topics(articles, embedder.embed_batch([a.text for a in articles]), params) if articles else []
    high = sorted((c.size for c in clusters if c.cohesion_class is Cohesion.HIGH), reverse=True)
    low = sorted((c.size for c in clusters if c.cohesion_class is Cohesion.LOW), reverse=True)
    return high == sorted(plan.high_sizes, reverse=True) and low == sorted(plan.low_sizes, reverse=True)


def calibrated_week(spec: TickerSpec, plan: WeekPlan, seed: int, params: ClusteringParams | None = None, max_tries: int = 200) -> list[NewsArticle]:
    params = params or ClusteringParams()
    embedder = HashingEmbedder()
    for attempt in range(max_tries):
        rng = random.Random(f"{seed}:{spec.ticker}:{plan.start}:{attempt}")
        articles = draw_week(spec, plan, rng)
        if week_matches(plan, articles, params, embedder):
            return articles
    raise RuntimeError(f"could not draw {spec.ticker} {plan.start} matching its plan")


def price_path(spec: TickerSpec, windows: Sequence[WeeklyWindow], seed: int) -> dict[date, list[DailyBar]]:
    rng = random.Random(f"{seed}:{spec.ticker}:prices")
    price = spec.start_price
    out = {}
    for w in windows:
        bars = []
        for d in w.trading_dates:
            price *= 1.0 + rng.gauss(0.0, spec.daily_vol)
            price = max(price, 1.0)
            bars.append(DailyBar(spec.ticker, d, round(price, 2)))
        out[w.start_date] = bars
    return out


def fundamentals_series(spec: TickerSpec, seed: int) -> list[FundamentalsSnapshot]:
    rng = random.Random(f"{seed}:{spec.ticker}:fundamentals")
    snaps = []
    revenue = rng.uniform(5e9, 30e9)
    for released in spec.quarterly_releases:
        revenue *= rng.uniform(0.9, 1.1)
        snaps.append(
            FundamentalsSnapshot(
                spec.ticker,
                released,
                {
                    "revenue": round(revenue, -6),
                    "grossMargin": round(rng.uniform(0.05, 0.45), 4),
                    "epsBasic": round(rng.uniform(-3.0, 4.0), 2),
                    "currentRatio": round(rng.uniform(0.8, 2.0), 3),
                    "totalDebtToEquity": round(rng.uniform(0.2, 3.0), 3),
                },
            )
        )
    return snaps


def write_fixture(root: str | Path, spec: TickerSpec, plans: Sequence[WeekPlan], seed: int = 0, params: ClusteringParams | None = None) -> Path:
    """Write news for every planned week plus bars for one week either side.

    Bars cover the week before the first plan (prior close) and the week after
    the last (outcome of the final prediction).
    """
    root = Path(root)
    tdir = root / spec.ticker
    news_windows = [make_window(p.start) for p in plans]
    bar_windows = [news_windows[0].shifted(-1)] + news_windows + [news_windows[-1].shifted(1)]
    # extra history for the weekly trend block
    bar_windows = [news_windows[0].shifted(-k) for k in range(4, 1, -1)] + bar_windows
    bars = price_path(spec, bar_windows, seed)
    snaps = fundamentals_series(spec, seed)
    for w in bar_windows:
        wdir = tdir / w.start_date.isoformat()
        atomic_write_text(wdir / "bars.csv", dump_bars(bars[w.start_date]))
    for plan, w in zip(plans, news_windows):
        wdir = tdir / w.start_date.isoformat()
        atomic_write_text(wdir / "news.jsonl", dump_news(calibrated_week(spec, plan, seed, params)))
        visible = [s for s in snaps if s.report_release_date <= w.end_date]
        atomic_write_text(wdir / "fundamentals.json", dump_fundamentals(visible))
    profile = {
        "name": spec.name,
        "ticker": spec.ticker,
        "industry": spec.industry,
        "exchange": spec.exchange,
        "marketCapitalization": spec.market_cap,
        "currency": "USD",
        **spec.extra,
    }
    atomic_write_text(tdir / "profile.json", json.dumps(profile, indent=2, sort_keys=True) + "\n")
    return tdir


def random_plans(start: date, weeks: int, seed: int, ticker: str, news_range=(10, 24)) -> list[WeekPlan]:
    rng = random.Random(f"{seed}:{ticker}:plans")
    plans = []
    for k in range(weeks):
        news = rng.randint(*news_range)
        high = tuple(rng.randint(2, 5) for _ in range(rng.randint(0, 3)))
        low = tuple(rng.randint(2, 3) for _ in range(rng.randint(0, 2)))
        while sum(high) + sum(low) > news:
            high = high[:-1]
        plans.append(WeekPlan(start + timedelta(weeks=k), news, high, low))
    return plans


# ---------------------------------------------------------------------------
# Offline teacher

_OUTCOME_RE = re.compile(r"\[Known Outcome\]\s*The actual movement of \S+ from \S+ to \S+ was (\S+) \(([+-]\d+\.\d+)%\)")
_NEWS_LINE_RE = re.compile(r"^- (?:\(\d{4}-\d{2}-\d{2}\)|\[\d+, \d+\]) (.+?)(?::| — |$)", re.MULTILINE)


def scripted_analysis(label: MovementLabel, ret_pct: str, headlines: Sequence[str], rng: random.Random) -> str:
    up = label.direction.value == "Up"
    picks = list(headlines) or ["no major company-specific news"]
    rng.shuffle(picks)
    pos = picks[:3] if up else picks[:2]
    con = picks[3:5] if up else picks[2:5]
    if len(pos) < 2:
        pos = pos + ["steady order flow"] * (2 - len(pos))
    if len(con) < 2:
        con = con + ["macro uncertainty"] * (2 - len(con))
    horizon = rng.choice(["long-term", "short-term", "long-term and short-term"])
    verb = "rise" if up else "fall"
    return "\n".join(
        [HEADERS[0]]
        + [f"{i}. Coverage of {h.lower()} supports sentiment." for i, h in enumerate(pos, 1)]
        + ["", HEADERS[1]]
        + [f"{i}. Reports on {h.lower()} weigh on the outlook." for i, h in enumerate(con, 1)]
        + [
            "",
            HEADERS[2],
            f"Prediction: {label}",
            f"Analysis: Weighing the {horizon} impact of the news against recent daily returns, "
            f"the stock is expected to {verb} by about {ret_pct.lstrip('+-')}% next week.",
        ]
    )


class ScriptedTeacher:
    """Deterministic stand-in for the teacher model.

    Reads the known outcome from the prompt and writes a well-formed analysis
    around the prompt's headlines. ``flaky`` is the share of requests whose
    first attempt comes back without the concerns header; ``broken`` is the
    share that never produce a valid answer.
    """

    def __init__(self, flaky: float = 0.0, broken: float = 0.0):
        self.flaky = flaky
        self.broken = broken

    def _u(self, text: str, salt: str) -> float:
        h = hashlib.sha256((salt + text).encode("utf-8")).digest()
        return int.from_bytes(h[:8], "big") / 2**64

    def complete(self, request: LlmRequest) -> LlmResponse:
        prompt = request.user_text
        m = _OUTCOME_RE.search(prompt)
        if m is None:
            label = find_label(prompt.split("[Instructions]")[-1]) or MovementLabel.parse("U1")
            ret = "+0.00"
        else:
            label, ret = MovementLabel.parse(m.group(1)), m.group(2)
        rng = random.Random(hashlib.sha256(prompt.encode("utf-8")).hexdigest())
        text = scripted_analysis(label, ret, _NEWS_LINE_RE.findall(prompt)[:8], rng)
        if self._u(prompt, "broken") < self.broken or (request.attempt == 0 and self._u(prompt, "flaky") < self.flaky):
            text = text.replace(HEADERS[1], "Concerns:")
        return LlmResponse(text)
