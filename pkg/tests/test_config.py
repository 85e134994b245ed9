from __future__ import annotations

import json
from datetime import date

import pytest

from newsbreadth.config import ConfigError, load_config
from newsbreadth.embedding import HashingEmbedder
from newsbreadth.prompting import PromptMode

BASE = {"tickers": ["ba"], "start": "2024-05-26", "end": "2024-10-05", "market_data": {"fixture_dir": "fx"}, "teacher": {"replay_dir": "cas"}}


def write(tmp_path, raw, name="run.yaml"):
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return path


def test_defaults_and_relative_paths(tmp_path):
    cfg = load_config(write(tmp_path, BASE))
    assert cfg.tickers == ["BA"] and cfg.mode is PromptMode.HGNC and cfg.budget == 8000
    assert cfg.fixture_dir == tmp_path.resolve() / "fx"
    assert cfg.teacher.replay_dir == tmp_path.resolve() / "cas"
    assert cfg.cache_dir == tmp_path.resolve() / "out" / "cache"
    assert len(cfg.windows()) == 19 and cfg.windows()[0].start_date == date(2024, 5, 26)
    assert isinstance(cfg.make_embedder(), HashingEmbedder)


def test_overrides_and_json(tmp_path):
    cfg = load_config(write(tmp_path, BASE, "run.json"), {"tickers": "xom, aapl", "mode": "HG", "budget": 4000, "output_dir": None})
    assert cfg.tickers == ["XOM", "AAPL"] and cfg.mode is PromptMode.HG and cfg.budget == 4000


@pytest.mark.parametrize(
    "change",
    [
        {"tickers": []},
        {"start": "2024-13-01"},
        {"start": "2024-11-01"},
        {"week_start": "someday"},
        {"mode": "HGX"},
        {"budget": 0},
        {"market_data": {}},
        {"market_data": {"fixture_dir": "a", "finnhub": {}}},
        {"clustering": {"cohesion_threshold": 2}},
        {"clustering": {"bogus": 1}},
        {"teacher": {"bogus": 1}},
        {"embedder": {"kind": "magic"}},
    ],
)
def test_invalid_configs(tmp_path, change):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, {**BASE, **change})).make_embedder()


def test_unreadable_and_unparsable(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("tickers: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    bad.write_text("- just a list\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    missing = {k: v for k, v in BASE.items() if k != "start"}
    with pytest.raises(ConfigError, match="start"):
        load_config(write(tmp_path, missing))
