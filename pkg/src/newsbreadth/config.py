"""
Run configuration, read from one YAML (or JSON) file.

Example::

    tickers: [BA]
    start: 2024-05-26          # first news week opens on the first week_start day >= start
    end: 2024-10-05            # inclusive; partial trailing weeks are dropped
    week_start: sunday
    mode: HGNC                 # Baseline | HG | HGNC
    budget: 8000               # prompt token budget
    output_dir: out
    clustering: {cohesion_threshold: 0.6, merge_threshold: 0.5, min_cluster_size: 2,
                 high_quota_floor: 6, low_supplement_cap: 4}
    market_data:
      fixture_dir: fixtures    # exactly one of fixture_dir / finnhub
      # finnhub: {base_url: https://finnhub.io/api/v1, api_key_env: FINNHUB_API_KEY}
    embedder: {kind: hashing, dim: 384}
      # or {kind: remote, url: ..., model: ..., api_key_env: EMBED_API_KEY}
    teacher:
      replay_dir: cassettes    # replay only; or http + optional record_dir
      # http: {base_url: https://api.openai.com/v1, api_key_env: OPENAI_API_KEY}
      model: gpt-4o
      temperature: 0
      max_tokens: 1024
      max_attempts: 3
      max_in_flight: 4
      requests_per_minute: 60

Relative paths resolve against the config file's directory. Credentials are
only ever read from the environment variables named here.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Any

import yaml

from .clustering import ClusteringParams
from .embedding import DEFAULT_DIM, Embedder, HashingEmbedder, RemoteEmbedder
from .market_data import FinnhubProvider, FixtureProvider, MarketDataCache, MarketDataProvider, WeeklyWindow, window_weeks
from .prompting import DEFAULT_BUDGET, PromptMode

WEEKDAYS = ("monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday")


class ConfigError(ValueError):
    pass


@dataclass
class TeacherConfig:
    replay_dir: Path | None = None
    record_dir: Path | None = None
    http: dict[str, Any] | None = None
    model: str = "gpt-4o"
    temperature: float = 0.0
    max_tokens: int = 1024
    max_attempts: int = 3
    max_in_flight: int = 4
    requests_per_minute: float | None = None


@dataclass
class RunConfig:
    tickers: list[str]
    start: date
    end: date
    mode: PromptMode = PromptMode.HGNC
    week_start: int = 6
    budget: int = DEFAULT_BUDGET
    output_dir: Path = Path("out")
    clustering: ClusteringParams = field(default_factory=ClusteringParams)
    fixture_dir: Path | None = None
    finnhub: dict[str, Any] | None = None
    embedder: dict[str, Any] = field(default_factory=lambda: {"kind": "hashing", "dim": DEFAULT_DIM})
    teacher: TeacherConfig = field(default_factory=TeacherConfig)
    trend_weeks: int = 4

    def __post_init__(self):
        if not self.tickers:
            raise ConfigError("no tickers configured")
        if self.budget <= 0:
            raise ConfigError("budget must be positive")
        if (self.fixture_dir is None) == (self.finnhub is None):
            raise ConfigError("configure exactly one of market_data.fixture_dir and market_data.finnhub")
        if self.start > self.end:
            raise ConfigError(f"start {self.start} is after end {self.end}")

    @property
    def cache_dir(self) -> Path:
        return self.output_dir / "cache"

    def windows(self) -> list[WeeklyWindow]:
        return window_weeks(self.start, self.end, self.week_start)

    def provider(self) -> MarketDataProvider:
        if self.fixture_dir is not None:
            return FixtureProvider(self.fixture_dir)
        env = self.finnhub.get("api_key_env", "FINNHUB_API_KEY")
        return FinnhubProvider(os.environ.get(env, ""), base_url=self.finnhub.get("base_url", "https://finnhub.io/api/v1"))

    def cache(self, with_provider: bool = False) -> MarketDataCache:
        return MarketDataCache(self.cache_dir, self.provider() if with_provider else None)

    def make_embedder(self) -> Embedder:
        kind = self.embedder.get("kind", "hashing")
        dim = int(self.embedder.get("dim", DEFAULT_DIM))
        if kind == "hashing":
            return HashingEmbedder(dim)
        if kind == "remote":
            key_env = self.embedder.get("api_key_env")
            return RemoteEmbedder(self.embedder["url"], self.embedder["model"], dim, os.environ.get(key_env) if key_env else None)
        raise ConfigError(f"unknown embedder kind {kind!r}")


def _as_date(value, name: str) -> date:
    if isinstance(value, date):
        return value
    try:
        return date.fromisoformat(str(value))
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from None


def _path(base: Path, value) -> Path | None:
    if value is None:
        return None
    p = Path(os.path.expanduser(str(value)))
    return p if p.is_absolute() else base / p


def load_config(path: str | os.PathLike, overrides: dict[str, Any] | None = None) -> RunConfig:
    """Read ``path`` and apply ``overrides`` (top-level keys, ``None`` values ignored)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        raw = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (ValueError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    for k, v in (overrides or {}).items():
        if v is not None:
            raw[k] = v
    return from_mapping(raw, path.parent.resolve())


def from_mapping(raw: dict[str, Any], base: Path) -> RunConfig:
    try:
        tickers = raw["tickers"]
        if isinstance(tickers, str):
            tickers = [t.strip() for t in tickers.split(",") if t.strip()]
        md = raw.get("market_data") or {}
        week_start = str(raw.get("week_start", "sunday")).lower()
        if week_start not in WEEKDAYS:
            raise ConfigError(f"week_start must be a weekday name, got {week_start!r}")
        try:
            params = ClusteringParams(**(raw.get("clustering") or {}))
        except TypeError as exc:
            raise ConfigError(f"clustering: {exc}") from None
        t = dict(raw.get("teacher") or {})
        for key in ("replay_dir", "record_dir"):
            t[key] = _path(base, t.get(key))
        try:
            teacher = TeacherConfig(**t)
        except TypeError as exc:
            raise ConfigError(f"teacher: {exc}") from None
        return RunConfig(
            tickers=[str(x).upper() for x in tickers],
            start=_as_date(raw["start"], "start"),
            end=_as_date(raw["end"], "end"),
            mode=PromptMode(raw.get("mode", "HGNC")),
            week_start=WEEKDAYS.index(week_start),
            budget=int(raw.get("budget", DEFAULT_BUDGET)),
            output_dir=_path(base, raw.get("output_dir", "out")),
            clustering=params,
            fixture_dir=_path(base, md.get("fixture_dir")),
            finnhub=md.get("finnhub"),
            embedder=raw.get("embedder") or {"kind": "hashing", "dim": DEFAULT_DIM},
            teacher=teacher,
            trend_weeks=int(raw.get("trend_weeks", 4)),
        )
    except KeyError as exc:
        raise ConfigError(f"missing config key {exc}") from None
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def describe(cfg: RunConfig) -> dict[str, Any]:
    d = dataclasses.asdict(cfg)
    return json.loads(json.dumps(d, default=str))
