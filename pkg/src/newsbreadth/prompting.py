"""
Render Baseline, HG and HG-NC prompts from a ``PromptBundle``.

Templates live in ``newsbreadth/templates/{baseline,hg,hgnc}.txt`` and use
``string.Template`` placeholders. The placeholder set is fixed:

=================  =========================================================
``company_intro``  company description
``ticker``         symbol
``context_start``  first day of the week the news and prices come from
``context_end``    last day of that week
``target_start``   first day of the predicted week
``target_end``     last day of the predicted week
``weekly_trend``   one line per recent week (close-to-close move)
``daily_prices``   ``date | close | return`` rows (HG and HG-NC only)
``news``           raw articles, or topics for HG-NC
``fundamentals``   latest eligible quarterly metrics
``ground_truth``   known outcome, teacher prompts only; empty otherwise
=================  =========================================================

Sections always appear in the order introduction, prices, news,
fundamentals, instructions. The ground-truth block, when present, is the
last thing in the prompt.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from string import Template
from typing import Callable, Sequence

from .clustering import Cohesion, SelectedTopic
from .labeling import MovementLabel, ReturnSeries
from .market_data import FundamentalsSnapshot, NewsArticle, WeeklyWindow

DEFAULT_BUDGET = 8000
TOPIC_SEPARATOR = " — "

Tokenizer = Callable[[str], int]


class PromptMode(str, Enum):
    BASELINE = "Baseline"
    HG = "HG"
    HGNC = "HGNC"


TEMPLATE_FILES = {
    PromptMode.BASELINE: "baseline.txt",
    PromptMode.HG: "hg.txt",
    PromptMode.HGNC: "hgnc.txt",
}


class PromptError(ValueError):
    """Bundle contents do not fit the mode, or the budget cannot hold the fixed sections."""


def estimate_tokens(text: str, tokenizer: Tokenizer | None = None) -> int:
    """Token count of ``text``; defaults to ``ceil(len(text) / 4)``."""
    if tokenizer is not None:
        return tokenizer(text)
    return math.ceil(len(text) / 4)


@dataclass(frozen=True)
class WeeklyMove:
    window: WeeklyWindow
    prior_close: float
    final_close: float

    @property
    def ret(self) -> float:
        return self.final_close / self.prior_close - 1.0


@dataclass(frozen=True)
class PromptBundle:
    ticker: str
    company_intro: str
    mode: PromptMode
    context_window: WeeklyWindow
    target_window: WeeklyWindow
    weekly_trend: tuple[WeeklyMove, ...]
    daily: ReturnSeries | None = None
    news: tuple[NewsArticle, ...] | tuple[SelectedTopic, ...] = ()
    fundamentals: FundamentalsSnapshot | None = None
    ground_truth_label: MovementLabel | None = None
    ground_truth_return: float | None = None


@dataclass(frozen=True)
class RenderedPrompt:
    text: str
    token_estimate: int
    truncated_topics: int


@dataclass(frozen=True)
class PromptTemplate:
    mode: PromptMode
    source: str

    @classmethod
    def load(cls, mode: PromptMode | str) -> PromptTemplate:
        mode = PromptMode(mode)
        text = resources.files("newsbreadth.templates").joinpath(TEMPLATE_FILES[mode]).read_text(encoding="utf-8")
        return cls(mode, text)

    def substitute(self, values: dict[str, str]) -> str:
        return Template(self.source).substitute(values)


def check_bundle(bundle: PromptBundle) -> None:
    mode = PromptMode(bundle.mode)
    if not bundle.weekly_trend:
        raise PromptError("weekly trend block is empty")
    if mode is PromptMode.BASELINE:
        if bundle.daily is not None:
            raise PromptError("Baseline prompts carry no daily price rows")
    elif bundle.daily is None:
        raise PromptError(f"{mode.value} prompts need daily prices")
    want_topics = mode is PromptMode.HGNC
    for item in bundle.news:
        if want_topics and not isinstance(item, SelectedTopic):
            raise PromptError("HGNC prompts take selected topics, not raw articles")
        if not want_topics and not isinstance(item, NewsArticle):
            raise PromptError(f"{mode.value} prompts take raw articles, not topics")
    if (bundle.ground_truth_label is None) != (bundle.ground_truth_return is None):
        raise PromptError("ground-truth label and return must be set together")


def fmt_pct(ret: float) -> str:
    """Signed percentage with two decimals, e.g. ``+2.00%``."""
    return f"{ret * 100:+.2f}%"


def fmt_price(p: float) -> str:
    return f"{p:.2f}"


def _one_line(text: str) -> str:
    return " ".join(text.split())


def render_weekly_trend(bundle: PromptBundle) -> str:
    lines = []
    for move in bundle.weekly_trend:
        verb = "increased" if move.final_close >= move.prior_close else "decreased"
        lines.append(
            f"From {move.window.start_date} to {move.window.end_date}, {bundle.ticker}'s stock price {verb} "
            f"from {fmt_price(move.prior_close)} to {fmt_price(move.final_close)} ({fmt_pct(move.ret)})."
        )
    return "\n".join(lines)


def render_daily_prices(series: ReturnSeries) -> str:
    return "\n".join(f"{d.isoformat()} | {fmt_price(c)} | {fmt_pct(r)}" for d, c, r in zip(series.dates, series.closes, series.returns))


def render_article(article: NewsArticle) -> str:
    day = article.published_at.date().isoformat()
    line = f"- ({day}) {_one_line(article.headline)}"
    summary = _one_line(article.summary)
    return f"{line}: {summary}" if summary else line


def render_topic(topic: SelectedTopic) -> str:
    rep = topic.representative
    line = f"- [{topic.reported_size}, {topic.temporal_span_days}] {_one_line(rep.headline)}"
    summary = _one_line(rep.summary)
    return f"{line}{TOPIC_SEPARATOR}{summary}" if summary else line


def render_fundamentals(snap: FundamentalsSnapshot | None) -> str:
    if snap is None or not snap.metrics:
        return "No quarterly report is available for this period."
    lines = [f"Most recent quarterly report, released {snap.report_release_date}:"]
    lines += [f"{name}: {value:.6g}" for name, value in snap.metrics.items()]
    return "\n".join(lines)


def render_ground_truth(bundle: PromptBundle) -> str:
    if bundle.ground_truth_label is None:
        return ""
    t = bundle.target_window
    return (
        "\n[Known Outcome]\n"
        f"The actual movement of {bundle.ticker} from {t.start_date} to {t.end_date} was "
        f"{bundle.ground_truth_label} ({fmt_pct(bundle.ground_truth_return)}). "
        "Write the answer so that its prediction matches this outcome, and justify it only with the information above "
        "without mentioning that the outcome was given.\n"
    )


def drop_order(news: Sequence[NewsArticle] | Sequence[SelectedTopic]) -> list[int]:
    """Indices of ``news`` from first-to-drop to last-to-drop.

    Topics: Low before High, then smaller before larger, later-listed first.
    Raw articles: oldest first.
    """
    idx = list(range(len(news)))
    if news and isinstance(news[0], SelectedTopic):
        return sorted(idx, key=lambda i: (news[i].cohesion_class is Cohesion.HIGH, news[i].reported_size, -i))
    return sorted(idx, key=lambda i: (news[i].published_at, news[i].id))


def _values(bundle: PromptBundle, news_text: str) -> dict[str, str]:
    c, t = bundle.context_window, bundle.target_window
    return {
        "company_intro": bundle.company_intro.strip(),
        "ticker": bundle.ticker,
        "context_start": c.start_date.isoformat(),
        "context_end": c.end_date.isoformat(),
        "target_start": t.start_date.isoformat(),
        "target_end": t.end_date.isoformat(),
        "weekly_trend": render_weekly_trend(bundle),
        "daily_prices": render_daily_prices(bundle.daily) if bundle.daily is not None else "",
        "news": news_text,
        "fundamentals": render_fundamentals(bundle.fundamentals),
        "ground_truth": render_ground_truth(bundle),
    }


def _fit(bundle, budget, tokenizer, template):
    """Returns (text, token cost, dropped count, news text) for the best fit."""
    check_bundle(bundle)
    template = template or PromptTemplate.load(bundle.mode)
    topics = PromptMode(bundle.mode) is PromptMode.HGNC
    items = list(bundle.news)
    lines = [render_topic(x) if topics else render_article(x) for x in items]
    empty_news = "(no topics)" if topics else "(no news)"
    drop = drop_order(items)

    def news_for(keep: int) -> str:
        kept = sorted(drop[len(drop) - keep :])
        return "\n".join(lines[i] for i in kept) if kept else empty_news

    def build(keep: int) -> tuple[str, int, str]:
        news_text = news_for(keep)
        text = template.substitute(_values(bundle, news_text)).rstrip() + "\n"
        return text, estimate_tokens(text, tokenizer), news_text

    text, cost, news_text = build(len(items))
    if cost <= budget:
        return text, cost, 0, news_text
    text, cost, news_text = build(0)
    if cost > budget:
        raise PromptError(f"fixed sections need {cost} tokens, budget is {budget}")
    # largest keep count that fits; cost is monotone in keep
    lo, hi = 0, len(items)
    best = (text, cost, news_text)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        attempt = build(mid)
        if attempt[1] <= budget:
            lo, best = mid, attempt
        else:
            hi = mid
    return best[0], best[1], len(items) - lo, best[2]


def render(
    bundle: PromptBundle,
    budget: int = DEFAULT_BUDGET,
    tokenizer: Tokenizer | None = None,
    template: PromptTemplate | None = None,
) -> RenderedPrompt:
    """Render ``bundle``, dropping the lowest-priority news until the prompt fits ``budget``.

    Raises:
        PromptError: the bundle does not match its mode, or the prompt
            exceeds the budget even with every news item removed.
    """
    text, cost, dropped, _ = _fit(bundle, budget, tokenizer, template)
    return RenderedPrompt(text, cost, dropped)


def render_pair(
    bundle: PromptBundle,
    budget: int = DEFAULT_BUDGET,
    tokenizer: Tokenizer | None = None,
    template: PromptTemplate | None = None,
) -> tuple[str, RenderedPrompt]:
    """Teacher text and student prompt for a bundle carrying its ground truth.

    The student prompt is the stripped bundle fitted to ``budget``. The
    teacher text keeps the same news and adds the known outcome at the end,
    so the two differ only in that block. Only the student side is bounded
    by the budget.
    """
    if bundle.ground_truth_label is None:
        raise PromptError("teacher prompts need a ground-truth label")
    template = template or PromptTemplate.load(bundle.mode)
    text, cost, dropped, news_text = _fit(strip_ground_truth(bundle), budget, tokenizer, template)
    teacher = template.substitute(_values(bundle, news_text)).rstrip() + "\n"
    return teacher, RenderedPrompt(text, cost, dropped)


def strip_ground_truth(bundle: PromptBundle) -> PromptBundle:
    """The same bundle without the known outcome (what the student model sees)."""
    if bundle.ground_truth_label is None and bundle.ground_truth_return is None:
        return bundle
    return dataclasses.replace(bundle, ground_truth_label=None, ground_truth_return=None)
