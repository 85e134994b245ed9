"""
Assemble per-week inputs from a populated cache.

A *news week* W supplies news, daily closes and fundamentals; the prompt
built from it predicts the movement of the following week W+1. The label of
W+1 is the close-to-close return from W's final close to W+1's final close.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .clustering import ClusteringParams, TopicCluster, WeekDiagnostics, cluster_topics, select_topics
from .embedding import Embedder, HashingEmbedder
from .labeling import MovementLabel, daily_returns, movement_label, weekly_return
from .market_data import (
    MarketDataCache,
    MarketDataError,
    NewsArticle,
    WeeklyWindow,
    company_intro,
    fundamentals_for_week,
)
from .prompting import PromptBundle, PromptMode, WeeklyMove

DEFAULT_TREND_WEEKS = 4


@dataclass(frozen=True)
class ClusteredWeek:
    window: WeeklyWindow
    articles: tuple[NewsArticle, ...]
    clusters: tuple[TopicCluster, ...]

    @property
    def diagnostics(self) -> WeekDiagnostics:
        return WeekDiagnostics.from_clusters(self.window.start_date, len(self.articles), self.clusters)


def cluster_week(
    cache: MarketDataCache,
    ticker: str,
    window: WeeklyWindow,
    params: ClusteringParams,
    embedder: Embedder | None = None,
) -> ClusteredWeek:
    embedder = embedder or HashingEmbedder()
    articles = cache.fetch_news(ticker, window)
    embeddings = embedder.embed_batch([a.text for a in articles]) if articles else []
    clusters = cluster_topics(articles, embeddings, params)
    return ClusteredWeek(window, tuple(articles), tuple(clusters))


def final_close(cache: MarketDataCache, ticker: str, window: WeeklyWindow) -> float:
    return cache.fetch_daily_bars(ticker, window)[-1].close


def target_outcome(cache: MarketDataCache, ticker: str, news_window: WeeklyWindow) -> tuple[MovementLabel, float]:
    """Label and return of the week after ``news_window``."""
    ret = weekly_return(final_close(cache, ticker, news_window), final_close(cache, ticker, news_window.shifted(1)))
    return movement_label(ret), ret


def weekly_trend(cache: MarketDataCache, ticker: str, window: WeeklyWindow, weeks: int = DEFAULT_TREND_WEEKS) -> tuple[WeeklyMove, ...]:
    """Close-to-close moves of up to ``weeks`` weeks ending with ``window``, oldest first.

    Older weeks missing from the cache are left out; the newest one is required.
    """
    moves = []
    for k in range(weeks):
        w = window.shifted(-k)
        try:
            prior = final_close(cache, ticker, w.shifted(-1))
            final = final_close(cache, ticker, w)
        except MarketDataError:
            if k == 0:
                raise
            break
        moves.append(WeeklyMove(w, prior, final))
    return tuple(reversed(moves))


def build_bundle(
    cache: MarketDataCache,
    ticker: str,
    news_window: WeeklyWindow,
    mode: PromptMode | str,
    params: ClusteringParams | None = None,
    embedder: Embedder | None = None,
    with_ground_truth: bool = False,
    trend_weeks: int = DEFAULT_TREND_WEEKS,
    clustered: ClusteredWeek | None = None,
) -> PromptBundle:
    """Everything needed to render the prompt for predicting the week after ``news_window``."""
    mode = PromptMode(mode)
    params = params or ClusteringParams()
    trend = weekly_trend(cache, ticker, news_window, trend_weeks)
    daily = None
    if mode is not PromptMode.BASELINE:
        bars = cache.fetch_daily_bars(ticker, news_window)
        daily = daily_returns(bars, trend[-1].prior_close)
    if mode is PromptMode.HGNC:
        clustered = clustered or cluster_week(cache, ticker, news_window, params, embedder)
        news: Sequence = tuple(select_topics(clustered.clusters, params, clustered.articles))
    else:
        news = tuple(cache.fetch_news(ticker, news_window))
    snapshots = cache.fetch_fundamentals(ticker, news_window)
    label = ret = None
    if with_ground_truth:
        label, ret = target_outcome(cache, ticker, news_window)
    return PromptBundle(
        ticker=ticker,
        company_intro=company_intro(ticker, cache.fetch_profile(ticker)),
        mode=mode,
        context_window=news_window,
        target_window=news_window.shifted(1),
        weekly_trend=trend,
        daily=daily,
        news=news,
        fundamentals=fundamentals_for_week(ticker, news_window, snapshots),
        ground_truth_label=label,
        ground_truth_return=ret,
    )
