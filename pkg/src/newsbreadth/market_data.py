"""
News, daily closes and quarterly fundamentals for one ticker, organized by
weekly window.

Two providers share one interface:

* ``FixtureProvider`` replays a directory laid out as
  ``<root>/<TICKER>/<window-start>/{news.jsonl,bars.csv,fundamentals.json}``.
* ``FinnhubProvider`` talks to the Finnhub REST API (``company-news``,
  ``stock/candle`` and ``stock/financials-reported``).

``MarketDataCache`` writes the same layout, so a populated cache directory is
itself a valid fixture directory.

File formats
------------
``news.jsonl``
    One JSON object per line, keys in this order:
    ``id, ticker, published_at, headline, summary``. ``published_at`` is
    ISO-8601 UTC with a trailing ``Z`` (``2024-06-16T13:05:00Z``). Lines are
    sorted by ``(published_at, id)``.
``bars.csv``
    Header ``date,close``; one row per trading day, ascending.
``<TICKER>/profile.json``
    Company profile object (``name``, ``industry``, ``exchange``,
    ``marketCapitalization`` in millions, ``currency``, optional ``intro``).
``fundamentals.json``
    A JSON list of ``{"report_release_date": "YYYY-MM-DD", "metrics": {...}}``
    objects sorted by release date. Metric order is preserved.

Finnhub field mapping: ``company-news`` items map ``id -> id``,
``datetime`` (unix seconds) ``-> published_at``, ``headline -> headline``,
``summary -> summary``. ``stock/candle`` arrays ``t`` (unix seconds) and
``c`` map to ``date`` and ``close``. ``financials-reported`` entries map
``filedDate -> report_release_date`` and the ``ic`` + ``bs`` concepts to
``metrics``. ``stock/profile2`` is stored verbatim as the profile.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from functools import lru_cache
from pathlib import Path
from typing import Protocol

import httpx

logger = logging.getLogger(__name__)

THREE_WEEKS = timedelta(days=21)
DEFAULT_WEEK_START = 6  # Sunday, in date.weekday() numbering


class MarketDataError(Exception):
    """Base class for provider and cache failures."""


class ProviderTransientError(MarketDataError):
    """Network failure, timeout, rate limiting or a 5xx response. Retrying may help."""


class ProviderAuthError(MarketDataError):
    """The provider rejected the credentials (401/403)."""


class MalformedPayloadError(MarketDataError):
    """A payload or fixture file could not be decoded into domain records."""


class DataGapError(MarketDataError):
    """Expected trading sessions are missing from the bars of a window."""

    def __init__(self, ticker: str, missing: list[date]):
        self.ticker = ticker
        self.missing = missing
        days = ", ".join(d.isoformat() for d in missing)
        super().__init__(f"{ticker}: no bar for trading day(s) {days}")


@dataclass(frozen=True)
class NewsArticle:
    id: str
    ticker: str
    published_at: datetime
    headline: str
    summary: str

    def __post_init__(self):
        if not self.headline.strip():
            raise ValueError(f"article {self.id!r} has an empty headline")
        if self.published_at.tzinfo is None:
            raise ValueError(f"article {self.id!r} has a naive timestamp")

    @property
    def text(self) -> str:
        """Text used for embedding: headline, a space, then the summary."""
        return f"{self.headline} {self.summary}"


@dataclass(frozen=True)
class DailyBar:
    ticker: str
    date: date
    close: float

    def __post_init__(self):
        if not self.close > 0:
            raise ValueError(f"{self.ticker} {self.date}: close must be positive, got {self.close}")


@dataclass(frozen=True)
class FundamentalsSnapshot:
    ticker: str
    report_release_date: date
    metrics: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class WeeklyWindow:
    start_date: date
    end_date: date
    trading_dates: tuple[date, ...] = ()

    def __post_init__(self):
        if self.start_date > self.end_date:
            raise ValueError("window start is after window end")
        prev = None
        for d in self.trading_dates:
            if not self.start_date <= d <= self.end_date:
                raise ValueError(f"trading date {d} outside window {self.label}")
            if prev is not None and d <= prev:
                raise ValueError("trading dates must be strictly increasing")
            prev = d

    @property
    def label(self) -> str:
        return f"{self.start_date.isoformat()}..{self.end_date.isoformat()}"

    def contains(self, ts: datetime) -> bool:
        """True when ``ts`` (UTC) falls on a calendar day inside the window."""
        day = ts.astimezone(timezone.utc).date()
        return self.start_date <= day <= self.end_date

    def shifted(self, weeks: int) -> WeeklyWindow:
        start = self.start_date + timedelta(weeks=weeks)
        return make_window(start)


# ---------------------------------------------------------------------------
# Calendar


@lru_cache(maxsize=None)
def _nyse_holidays(year: int) -> frozenset[date]:
    from pandas.tseries.holiday import (
        AbstractHolidayCalendar,
        GoodFriday,
        Holiday,
        USLaborDay,
        USMartinLutherKingJr,
        USMemorialDay,
        USPresidentsDay,
        USThanksgivingDay,
        nearest_workday,
    )

    class NYSECalendar(AbstractHolidayCalendar):
        rules = [
            Holiday("New Year's Day", month=1, day=1, observance=nearest_workday),
            USMartinLutherKingJr,
            USPresidentsDay,
            GoodFriday,
            USMemorialDay,
            Holiday("Juneteenth", month=6, day=19, start_date="2022-01-01", observance=nearest_workday),
            Holiday("Independence Day", month=7, day=4, observance=nearest_workday),
            USLaborDay,
            USThanksgivingDay,
            Holiday("Christmas", month=12, day=25, observance=nearest_workday),
        ]

    days = NYSECalendar().holidays(date(year, 1, 1), date(year, 12, 31))
    # NYSE does not observe a Saturday New Year's Day on the prior Friday.
    return frozenset(d.date() for d in days if not (d.month == 12 and d.day == 31))


def is_trading_day(d: date) -> bool:
    """Weekday that is not a NYSE full-day holiday."""
    return d.weekday() < 5 and d not in _nyse_holidays(d.year)


def trading_days(start: date, end: date) -> tuple[date, ...]:
    n = (end - start).days + 1
    return tuple(d for d in (start + timedelta(days=i) for i in range(n)) if is_trading_day(d))


def make_window(start: date) -> WeeklyWindow:
    end = start + timedelta(days=6)
    return WeeklyWindow(start, end, trading_days(start, end))


def window_weeks(range_start: date, range_end: date, week_start: int = DEFAULT_WEEK_START) -> list[WeeklyWindow]:
    """Partition ``[range_start, range_end]`` into full 7-day windows.

    The first window opens on the first ``week_start`` weekday on or after
    ``range_start``; a trailing partial window is dropped. ``range_end`` is
    inclusive, so 2024-05-26..2024-06-08 yields two Sunday-aligned weeks.
    """
    if range_start > range_end:
        raise ValueError(f"inverted range: {range_start} > {range_end}")
    start = range_start + timedelta(days=(week_start - range_start.weekday()) % 7)
    windows = []
    while start + timedelta(days=6) <= range_end:
        windows.append(make_window(start))
        start += timedelta(days=7)
    return windows


def fundamentals_for_week(
    ticker: str, window: WeeklyWindow, snapshots: list[FundamentalsSnapshot]
) -> FundamentalsSnapshot | None:
    """Latest snapshot released at least 21 days before the window opens."""
    chosen = None
    for snap in snapshots:
        if snap.ticker != ticker:
            continue
        if snap.report_release_date + THREE_WEEKS <= window.start_date:
            chosen = snap
        else:
            break
    return chosen


# ---------------------------------------------------------------------------
# Record (de)serialization


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_timestamp(raw: str) -> datetime:
    ts = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _sort_articles(articles):
    return sorted(articles, key=lambda a: (a.published_at, a.id))


def dump_news(articles: list[NewsArticle]) -> str:
    lines = []
    for a in _sort_articles(articles):
        record = {
            "id": a.id,
            "ticker": a.ticker,
            "published_at": format_timestamp(a.published_at),
            "headline": a.headline,
            "summary": a.summary,
        }
        lines.append(json.dumps(record, ensure_ascii=False))
    return "".join(line + "\n" for line in lines)


def load_news(text: str, source: str = "<news>") -> list[NewsArticle]:
    articles = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            articles.append(
                NewsArticle(
                    id=str(rec["id"]),
                    ticker=rec["ticker"],
                    published_at=parse_timestamp(rec["published_at"]),
                    headline=rec["headline"],
                    summary=rec.get("summary", ""),
                )
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise MalformedPayloadError(f"{source}:{lineno}: {exc}") from exc
    return articles


def dump_bars(bars: list[DailyBar]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["date", "close"])
    for bar in sorted(bars, key=lambda b: b.date):
        writer.writerow([bar.date.isoformat(), repr(bar.close)])
    return buf.getvalue()


def load_bars(text: str, ticker: str, source: str = "<bars>") -> list[DailyBar]:
    bars = []
    try:
        for row in csv.DictReader(io.StringIO(text)):
            bars.append(DailyBar(ticker, date.fromisoformat(row["date"]), float(row["close"])))
    except (ValueError, KeyError, TypeError) as exc:
        raise MalformedPayloadError(f"{source}: {exc}") from exc
    return bars


def dump_fundamentals(snapshots: list[FundamentalsSnapshot]) -> str:
    records = [
        {"report_release_date": s.report_release_date.isoformat(), "metrics": s.metrics}
        for s in sorted(snapshots, key=lambda s: s.report_release_date)
    ]
    return json.dumps(records, indent=2) + "\n"


def load_fundamentals(text: str, ticker: str, source: str = "<fundamentals>") -> list[FundamentalsSnapshot]:
    try:
        records = json.loads(text)
        snaps = [
            FundamentalsSnapshot(
                ticker,
                date.fromisoformat(r["report_release_date"]),
                {str(k): float(v) for k, v in r["metrics"].items()},
            )
            for r in records
        ]
    except (ValueError, KeyError, TypeError, AttributeError) as exc:
        raise MalformedPayloadError(f"{source}: {exc}") from exc
    return sorted(snaps, key=lambda s: s.report_release_date)


def atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


# ---------------------------------------------------------------------------
# Providers


class MarketDataProvider(Protocol):
    def news(self, ticker: str, window: WeeklyWindow) -> list[NewsArticle]: ...

    def bars(self, ticker: str, window: WeeklyWindow) -> list[DailyBar]: ...

    def fundamentals(self, ticker: str, window: WeeklyWindow) -> list[FundamentalsSnapshot]: ...

    def profile(self, ticker: str) -> dict: ...


class FixtureProvider:
    """Replays a fixture directory. Missing files read as empty."""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        if not self.root.is_dir():
            raise MarketDataError(f"fixture directory not found: {self.root}")

    def _path(self, ticker: str, window: WeeklyWindow, name: str) -> Path:
        return self.root / ticker / window.start_date.isoformat() / name

    def _read(self, path: Path) -> str | None:
        try:
            return path.read_text(encoding="utf-8")
        except FileNotFoundError:
            return None

    def news(self, ticker, window):
        path = self._path(ticker, window, "news.jsonl")
        text = self._read(path)
        return [] if text is None else load_news(text, str(path))

    def bars(self, ticker, window):
        path = self._path(ticker, window, "bars.csv")
        text = self._read(path)
        return [] if text is None else load_bars(text, ticker, str(path))

    def fundamentals(self, ticker, window):
        path = self._path(ticker, window, "fundamentals.json")
        text = self._read(path)
        return [] if text is None else load_fundamentals(text, ticker, str(path))

    def profile(self, ticker):
        path = self.root / ticker / "profile.json"
        text = self._read(path)
        if text is None:
            return {}
        try:
            return json.loads(text)
        except ValueError as exc:
            raise MalformedPayloadError(f"{path}: {exc}") from exc


class FinnhubProvider:
    """Live Finnhub client. The API key comes from the caller (usually an env var)."""

    def __init__(
        self,
        api_key: str,
        base_url: str = "https://finnhub.io/api/v1",
        timeout: float = 20.0,
        transport: httpx.BaseTransport | None = None,
    ):
        if not api_key:
            raise ProviderAuthError("no Finnhub API key configured")
        self._client = httpx.Client(base_url=base_url, timeout=timeout, transport=transport)
        self._api_key = api_key

    def _get(self, path: str, **params):
        params["token"] = self._api_key
        try:
            resp = self._client.get(path, params=params)
        except httpx.TransportError as exc:
            raise ProviderTransientError(f"{path}: {exc}") from exc
        if resp.status_code in (401, 403):
            raise ProviderAuthError(f"{path}: HTTP {resp.status_code}")
        if resp.status_code == 429 or resp.status_code >= 500:
            raise ProviderTransientError(f"{path}: HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise MarketDataError(f"{path}: HTTP {resp.status_code}")
        try:
            return resp.json()
        except ValueError as exc:
            raise MalformedPayloadError(f"{path}: body is not JSON") from exc

    def news(self, ticker, window):
        payload = self._get(
            "/company-news",
            symbol=ticker,
            **{"from": window.start_date.isoformat(), "to": window.end_date.isoformat()},
        )
        if not isinstance(payload, list):
            raise MalformedPayloadError("company-news: expected a list")
        articles = []
        for item in payload:
            try:
                headline = (item.get("headline") or "").strip()
                if not headline:
                    continue
                articles.append(
                    NewsArticle(
                        id=str(item["id"]),
                        ticker=ticker,
                        published_at=datetime.fromtimestamp(int(item["datetime"]), tz=timezone.utc),
                        headline=headline,
                        summary=(item.get("summary") or "").strip(),
                    )
                )
            except (KeyError, TypeError, ValueError, AttributeError) as exc:
                raise MalformedPayloadError(f"company-news item: {exc}") from exc
        return articles

    def bars(self, ticker, window):
        start = datetime.combine(window.start_date, datetime.min.time(), tzinfo=timezone.utc)
        end = datetime.combine(window.end_date, datetime.max.time(), tzinfo=timezone.utc)
        payload = self._get(
            "/stock/candle",
            symbol=ticker,
            resolution="D",
            **{"from": int(start.timestamp()), "to": int(end.timestamp())},
        )
        if not isinstance(payload, dict):
            raise MalformedPayloadError("stock/candle: expected an object")
        if payload.get("s") == "no_data":
            return []
        try:
            return [
                DailyBar(ticker, datetime.fromtimestamp(int(t), tz=timezone.utc).date(), float(c))
                for t, c in zip(payload["t"], payload["c"], strict=True)
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedPayloadError(f"stock/candle: {exc}") from exc

    def fundamentals(self, ticker, window):
        payload = self._get("/stock/financials-reported", symbol=ticker, freq="quarterly")
        snaps = []
        try:
            for entry in payload.get("data", []):
                released = date.fromisoformat(entry["filedDate"][:10])
                if released > window.start_date:
                    continue
                metrics = {}
                report = entry.get("report", {})
                for section in ("ic", "bs"):
                    for item in report.get(section, []):
                        if isinstance(item.get("value"), (int, float)):
                            metrics[item["concept"]] = float(item["value"])
                snaps.append(FundamentalsSnapshot(ticker, released, metrics))
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise MalformedPayloadError(f"financials-reported: {exc}") from exc
        return sorted(snaps, key=lambda s: s.report_release_date)

    def profile(self, ticker):
        payload = self._get("/stock/profile2", symbol=ticker)
        if not isinstance(payload, dict):
            raise MalformedPayloadError("stock/profile2: expected an object")
        return payload


def company_intro(ticker: str, profile: dict) -> str:
    """One-paragraph company introduction from a provider profile."""
    if profile.get("intro"):
        return str(profile["intro"]).strip()
    name = profile.get("name") or ticker
    parts = [f"{name} ({ticker})"]
    if profile.get("industry"):
        parts.append(f"operates in the {profile['industry']} industry")
    if profile.get("exchange"):
        parts.append(f"is listed on {profile['exchange']}")
    cap = profile.get("marketCapitalization")
    if isinstance(cap, (int, float)) and cap > 0:
        parts.append(f"has a market capitalization of {cap:,.0f} million {profile.get('currency', 'USD')}")
    if len(parts) == 1:
        return f"{name} ({ticker}) is a publicly traded company."
    return parts[0] + " " + ", ".join(parts[1:-1]) + (" and " if len(parts) > 2 else "") + parts[-1] + "."


# ---------------------------------------------------------------------------
# Cache


class MarketDataCache:
    """Per-(ticker, window) files in the fixture layout, written atomically.

    ``fetch_*`` methods read through the cache: a hit never touches the
    provider, a miss fetches, validates and stores.
    """

    def __init__(self, root: str | os.PathLike, provider: MarketDataProvider | None = None):
        self.root = Path(root)
        self.provider = provider

    def _path(self, ticker: str, window: WeeklyWindow, name: str) -> Path:
        return self.root / ticker / window.start_date.isoformat() / name

    def _need_provider(self):
        if self.provider is None:
            raise MarketDataError(f"cache miss under {self.root} and no provider configured")
        return self.provider

    def has_news(self, ticker: str, window: WeeklyWindow) -> bool:
        return self._path(ticker, window, "news.jsonl").exists()

    def fetch_news(self, ticker: str, window: WeeklyWindow) -> list[NewsArticle]:
        path = self._path(ticker, window, "news.jsonl")
        if path.exists():
            return load_news(path.read_text(encoding="utf-8"), str(path))
        articles = self._need_provider().news(ticker, window)
        kept = [a for a in articles if window.contains(a.published_at)]
        if len(kept) != len(articles):
            logger.info("%s %s: dropped %d article(s) outside the window", ticker, window.label, len(articles) - len(kept))
        seen = set()
        unique = []
        for a in _sort_articles(kept):
            if a.id not in seen:
                seen.add(a.id)
                unique.append(a)
        atomic_write_text(path, dump_news(unique))
        return unique

    def fetch_daily_bars(self, ticker: str, window: WeeklyWindow) -> list[DailyBar]:
        path = self._path(ticker, window, "bars.csv")
        if path.exists():
            bars = load_bars(path.read_text(encoding="utf-8"), ticker, str(path))
        else:
            bars = self._need_provider().bars(ticker, window)
            bars = check_bars(ticker, window, bars)
            atomic_write_text(path, dump_bars(bars))
        return check_bars(ticker, window, bars)

    def fetch_fundamentals(self, ticker: str, window: WeeklyWindow) -> list[FundamentalsSnapshot]:
        path = self._path(ticker, window, "fundamentals.json")
        if path.exists():
            return load_fundamentals(path.read_text(encoding="utf-8"), ticker, str(path))
        snaps = self._need_provider().fundamentals(ticker, window)
        atomic_write_text(path, dump_fundamentals(snaps))
        return snaps

    def fetch_profile(self, ticker: str) -> dict:
        path = self.root / ticker / "profile.json"
        if path.exists():
            return json.loads(path.read_text(encoding="utf-8"))
        profile = self._need_provider().profile(ticker)
        atomic_write_text(path, json.dumps(profile, indent=2, sort_keys=True) + "\n")
        return profile


def check_bars(ticker: str, window: WeeklyWindow, bars: list[DailyBar]) -> list[DailyBar]:
    """Sort, restrict to the window, and require one bar per trading day.

    Raises:
        DataGapError: a trading session of the window has no bar (including
            the empty case).
        ValueError: two bars share a date.
    """
    inside = sorted((b for b in bars if window.start_date <= b.date <= window.end_date), key=lambda b: b.date)
    dates = [b.date for b in inside]
    if len(set(dates)) != len(dates):
        raise ValueError(f"{ticker} {window.label}: duplicate bars")
    have = set(dates)
    missing = [d for d in window.trading_dates if d not in have]
    if missing or not inside:
        raise DataGapError(ticker, missing or list(window.trading_dates))
    return inside


def fetch_news(provider: MarketDataProvider, ticker: str, window: WeeklyWindow, cache_dir=None) -> list[NewsArticle]:
    """Articles published inside ``window``; cached when ``cache_dir`` is given."""
    if cache_dir is not None:
        return MarketDataCache(cache_dir, provider).fetch_news(ticker, window)
    return _sort_articles(a for a in provider.news(ticker, window) if window.contains(a.published_at))


def fetch_daily_bars(provider: MarketDataProvider, ticker: str, window: WeeklyWindow, cache_dir=None) -> list[DailyBar]:
    if cache_dir is not None:
        return MarketDataCache(cache_dir, provider).fetch_daily_bars(ticker, window)
    return check_bars(ticker, window, provider.bars(ticker, window))
