"""
Topic clustering of one week's news and the dissemination metadata built on it.

The reference clusterer is deterministic average-linkage agglomeration on
cosine similarity. Articles are first ordered by ``(published_at, id)`` and
every tie (equal merge similarity, equal centroid similarity) resolves to the
earlier article in that order, so identical inputs always give identical
clusters in identical order.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from datetime import date, datetime
from enum import Enum
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

from .embedding import Embedding, cosine_similarity, similarity_matrix
from .market_data import NewsArticle


class Cohesion(str, Enum):
    HIGH = "High"
    LOW = "Low"


@dataclass(frozen=True)
class ClusteringParams:
    cohesion_threshold: float = 0.6
    merge_threshold: float = 0.5
    min_cluster_size: int = 2
    high_quota_floor: int = 6
    low_supplement_cap: int = 4

    def __post_init__(self):
        for name in ("cohesion_threshold", "merge_threshold"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must be in (0, 1), got {v}")
        for name in ("min_cluster_size", "high_quota_floor", "low_supplement_cap"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class TopicCluster:
    member_ids: tuple[str, ...]
    centroid: Embedding = field(repr=False)
    cohesion: float
    representative_id: str
    temporal_span_days: int
    cohesion_class: Cohesion

    @property
    def size(self) -> int:
        return len(self.member_ids)


@dataclass(frozen=True)
class SelectedTopic:
    representative: NewsArticle
    reported_size: int
    temporal_span_days: int
    cohesion_class: Cohesion


def article_key(article: NewsArticle) -> tuple[datetime, str]:
    return (article.published_at, article.id)


# ---------------------------------------------------------------------------
# Cluster statistics


def avg_pairwise_similarity(embeddings: Sequence[Embedding]) -> float:
    """Mean cosine similarity over all unordered pairs of members."""
    n = len(embeddings)
    if n < 2:
        raise ValueError("need at least two members for pairwise similarity")
    sim = similarity_matrix(embeddings)
    iu = np.triu_indices(n, k=1)
    return float(np.clip(sim[iu].mean(), -1.0, 1.0))


def classify_cohesion(cohesion: float, threshold: float = 0.6) -> Cohesion:
    return Cohesion.HIGH if cohesion > threshold else Cohesion.LOW


def centroid(embeddings: Sequence[Embedding]) -> Embedding:
    """Mean of the member vectors, renormalized to unit length."""
    if not embeddings:
        raise ValueError("empty cluster has no centroid")
    return Embedding.from_raw(np.mean([e.vector for e in embeddings], axis=0))


def representative(members: Sequence[NewsArticle], embeddings: Sequence[Embedding], center: Embedding | None = None) -> str:
    """Id of the member closest to the centroid.

    Ties go to the earliest ``published_at``, then the smallest id.
    """
    if not members:
        raise ValueError("empty cluster has no representative")
    if len(members) != len(embeddings):
        raise ValueError("one embedding per member required")
    center = center or centroid(embeddings)
    best = min(
        range(len(members)),
        key=lambda i: (-cosine_similarity(embeddings[i], center), members[i].published_at, members[i].id),
    )
    return members[best].id


def temporal_span(timestamps: Iterable[datetime]) -> int:
    """Whole days between the first and last timestamp (floored)."""
    ts = list(timestamps)
    if not ts:
        raise ValueError("no timestamps")
    return math.floor((max(ts) - min(ts)).total_seconds() / 86400)


# ---------------------------------------------------------------------------
# Partitioning


class Clusterer(Protocol):
    """Groups embeddings; returns lists of indices into the input sequence.

    Groups of any size may be returned; ``cluster_topics`` drops the small
    ones. A stochastic implementation must take its seed from configuration.
    """

    def partition(self, embeddings: Sequence[Embedding]) -> list[list[int]]: ...


class AverageLinkageClusterer:
    """Agglomerate while the best pair of clusters has average similarity >= ``merge_threshold``.

    Inter-cluster similarity is updated with the Lance-Williams rule for
    average linkage instead of being recomputed from members. Among equally
    similar pairs the one with the smallest (row, column) index wins.
    """

    def __init__(self, merge_threshold: float = 0.5):
        self.merge_threshold = merge_threshold

    def partition(self, embeddings):
        n = len(embeddings)
        if n == 0:
            return []
        link = similarity_matrix(embeddings).astype(np.float64)
        link[np.tril_indices(n)] = -np.inf
        sizes = np.ones(n, dtype=np.int64)
        groups: dict[int, list[int]] = {i: [i] for i in range(n)}
        while len(groups) > 1:
            flat = int(np.argmax(link))
            i, j = divmod(flat, n)
            if not link[i, j] >= self.merge_threshold:
                break
            # merge j into i (i < j); row i holds pairs (i, k>i), column i holds (k<i, i)
            si, sj = sizes[i], sizes[j]
            row_i = np.maximum(link[i, :], link[:, i])
            row_j = np.maximum(link[j, :], link[:, j])
            merged = (si * row_i + sj * row_j) / (si + sj)
            link[i, i + 1 :] = merged[i + 1 :]
            link[:i, i] = merged[:i]
            link[j, :] = -np.inf
            link[:, j] = -np.inf
            link[i, i] = -np.inf
            sizes[i] += sj
            groups[i].extend(groups.pop(j))
        return [sorted(g) for g in groups.values()]


def cluster_topics(
    articles: Sequence[NewsArticle],
    embeddings: Sequence[Embedding],
    params: ClusteringParams | None = None,
    clusterer: Clusterer | None = None,
) -> list[TopicCluster]:
    """Cluster one week of articles.

    Returns clusters with at least ``min_cluster_size`` members, largest first
    (ties by earliest member). Articles in no returned cluster are
    unclustered and play no further part.
    """
    params = params or ClusteringParams()
    if len(articles) != len(embeddings):
        raise ValueError(f"{len(articles)} articles but {len(embeddings)} embeddings")
    if not articles:
        return []
    ids = [a.id for a in articles]
    if len(set(ids)) != len(ids):
        raise ValueError("article ids must be unique within a week")
    order = sorted(range(len(articles)), key=lambda i: article_key(articles[i]))
    arts = [articles[i] for i in order]
    embs = [embeddings[i] for i in order]
    clusterer = clusterer or AverageLinkageClusterer(params.merge_threshold)
    groups = [sorted(g) for g in clusterer.partition(embs) if len(g) >= params.min_cluster_size]
    seen: set[int] = set()
    for g in groups:
        if seen.intersection(g):
            raise ValueError("clusterer returned overlapping groups")
        seen.update(g)
    groups.sort(key=lambda g: (-len(g), g[0]))
    return [build_cluster([arts[i] for i in g], [embs[i] for i in g], params.cohesion_threshold) for g in groups]


def build_cluster(members: Sequence[NewsArticle], embeddings: Sequence[Embedding], threshold: float = 0.6) -> TopicCluster:
    center = centroid(embeddings)
    cohesion = avg_pairwise_similarity(embeddings)
    return TopicCluster(
        member_ids=tuple(m.id for m in members),
        centroid=center,
        cohesion=cohesion,
        representative_id=representative(members, embeddings, center),
        temporal_span_days=temporal_span(m.published_at for m in members),
        cohesion_class=classify_cohesion(cohesion, threshold),
    )


def unclustered(articles: Sequence[NewsArticle], clusters: Sequence[TopicCluster]) -> list[NewsArticle]:
    taken = {mid for c in clusters for mid in c.member_ids}
    return [a for a in articles if a.id not in taken]


# ---------------------------------------------------------------------------
# Topic selection and diagnostics


def select_topics(
    clusters: Sequence[TopicCluster],
    params: ClusteringParams | None = None,
    articles: Mapping[str, NewsArticle] | Sequence[NewsArticle] = (),
) -> list[SelectedTopic]:
    """Apply the topic quota.

    Every High-cohesion cluster is kept (largest first, then most cohesive).
    When fewer than ``high_quota_floor`` are High, up to
    ``low_supplement_cap`` Low clusters follow, most cohesive first, each
    reporting at most 2 articles.
    """
    params = params or ClusteringParams()
    by_id = articles if isinstance(articles, Mapping) else {a.id: a for a in articles}

    def rep(c: TopicCluster) -> NewsArticle:
        try:
            return by_id[c.representative_id]
        except KeyError:
            raise KeyError(f"representative {c.representative_id!r} not among the given articles") from None

    high = [c for c in clusters if c.cohesion_class is Cohesion.HIGH]
    low = [c for c in clusters if c.cohesion_class is Cohesion.LOW]
    high.sort(key=lambda c: (-c.size, -c.cohesion, article_key(rep(c))))
    chosen_low: list[TopicCluster] = []
    if len(high) < params.high_quota_floor:
        low.sort(key=lambda c: (-c.cohesion, -c.size, article_key(rep(c))))
        chosen_low = low[: params.low_supplement_cap]
    out = [SelectedTopic(rep(c), c.size, c.temporal_span_days, Cohesion.HIGH) for c in high]
    out += [SelectedTopic(rep(c), min(c.size, 2), c.temporal_span_days, Cohesion.LOW) for c in chosen_low]
    return out


def clustering_ratio(clusters: Sequence[TopicCluster], total_articles: int) -> float:
    """Share of the week's articles that sit in High-cohesion clusters."""
    if total_articles < 0:
        raise ValueError("total_articles must be >= 0")
    if total_articles == 0:
        return 0.0
    clustered = sum(c.size for c in clusters if c.cohesion_class is Cohesion.HIGH)
    return clustered / total_articles


@dataclass(frozen=True)
class WeekDiagnostics:
    start_date: date
    news_count: int
    clusters: int
    good_clusters: int
    clustered_news: int
    ratio: float

    @classmethod
    def from_clusters(cls, start: date, news_count: int, clusters: Sequence[TopicCluster]) -> WeekDiagnostics:
        good = [c for c in clusters if c.cohesion_class is Cohesion.HIGH]
        return cls(
            start_date=start,
            news_count=news_count,
            clusters=len(clusters),
            good_clusters=len(good),
            clustered_news=sum(c.size for c in good),
            ratio=clustering_ratio(clusters, news_count),
        )


DIAGNOSTICS_COLUMNS = ("start_date", "news_count", "clusters", "good_clusters", "clustered_news", "ratio")


def diagnostics_csv(rows: Sequence[WeekDiagnostics]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DIAGNOSTICS_COLUMNS)
    for r in rows:
        w.writerow([r.start_date.isoformat(), r.news_count, r.clusters, r.good_clusters, r.clustered_news, f"{r.ratio:.4f}"])
    return buf.getvalue()


def read_diagnostics_csv(text: str) -> list[WeekDiagnostics]:
    return [
        WeekDiagnostics(
            date.fromisoformat(r["start_date"]),
            int(r["news_count"]),
            int(r["clusters"]),
            int(r["good_clusters"]),
            int(r["clustered_news"]),
            float(r["ratio"]),
        )
        for r in csv.DictReader(io.StringIO(text))
    ]

