from __future__ import annotations

import json
from datetime import timedelta

import pytest

import helpers
from newsbreadth import cli
from newsbreadth.clustering import read_diagnostics_csv
from newsbreadth.dataset import load_jsonl


def run(config, *argv):
    return cli.main(["-c", str(config), *argv])


@pytest.fixture(scope="module")
def pipeline(ba_fixture, tmp_path_factory):
    """One full BA run: ingest, cluster, record, replay, evaluate and report."""
    root = tmp_path_factory.mktemp("cli")
    config = helpers.write_config(root / "run.yaml", ba_fixture, root / "out")
    out = root / "out"
    codes = {"ingest": run(config, "ingest"), "cluster": run(config, "cluster")}
    codes["record"] = helpers.record_cassettes(config, flaky=0.3)
    codes["build-dataset"] = run(config, "build-dataset")
    preds = helpers.write_jsonl(root / "preds.jsonl", helpers.ba_case_predictions(helpers.ba_actuals(out / "cache")))
    codes["evaluate"] = run(config, "evaluate", "--predictions", str(preds))
    codes["report"] = run(config, "report")
    return root, config, out, codes


def test_every_step_succeeds(pipeline):
    *_, codes = pipeline
    assert codes == {"ingest": 0, "cluster": 0, "record": 0, "build-dataset": 0, "evaluate": 0, "report": 0}


def test_ingest_prints_counts(ba_fixture, tmp_path, capsys):
    config = helpers.write_config(tmp_path / "run.yaml", ba_fixture, tmp_path / "out")
    assert run(config, "ingest") == 0
    assert "BA: 19 windows, 1770 articles" in capsys.readouterr().out


def test_cluster_csv_matches_table(pipeline):
    _, _, out, _ = pipeline
    rows = read_diagnostics_csv((out / "clusters" / "BA.csv").read_text())
    assert [(r.start_date, r.news_count, r.clusters, r.good_clusters, r.clustered_news) for r in rows] == [row[:5] for row in helpers.BA_TABLE]
    assert all(abs(r.ratio - row[5]) <= 0.005 for r, row in zip(rows, helpers.BA_TABLE))


def test_dataset_outputs(pipeline):
    _, _, out, _ = pipeline
    examples = load_jsonl(out / "dataset.jsonl")
    assert len(examples) == 19 and {e.meta.mode for e in examples} == {"HGNC"}
    assert (out / "skipped.tsv").read_text() == ""


def test_evaluate_and_report_outputs(pipeline):
    _, _, out, _ = pipeline
    summary = json.loads((out / "summary.json").read_text())
    assert summary["HGNC"]["binary_accuracy"] == pytest.approx(12 / 19, abs=1e-9)
    assert summary["HG"]["binary_accuracy"] == pytest.approx(10 / 19, abs=1e-9)
    assert summary["HGNC"]["case_counts"] == {"Case1": 7, "Case2": 5, "Case3": 7}
    for name in ("accuracy.png", "BA_ratio_cases.png", "BA_clusters.png"):
        assert (out / "figures" / name).stat().st_size > 0
    assert len((out / "cases.csv").read_text().splitlines()) == 20


def test_steps_are_idempotent(pipeline):
    _, config, out, _ = pipeline
    before = {p: p.read_bytes() for p in (out / "clusters" / "BA.csv", out / "dataset.jsonl")}
    assert run(config, "cluster") == 0 and run(config, "build-dataset") == 0
    assert {p: p.read_bytes() for p in before} == before


def test_build_prompts_all_modes(pipeline, tmp_path):
    _, config, out, _ = pipeline
    assert run(config, "--output-dir", str(tmp_path), "--tickers", "BA", "build-prompts") == 2  # no cache here
    assert run(config, "build-prompts", "--all-modes") == 0
    names = sorted(p.name for p in (out / "prompts" / "BA").iterdir())
    assert len(names) == 57 and names[:3] == ["2024-05-26_Baseline.txt", "2024-05-26_HG.txt", "2024-05-26_HGNC.txt"]


def test_bad_config_and_missing_cache(tmp_path, ba_fixture, capsys):
    assert run(tmp_path / "nope.yaml", "ingest") == 2
    config = helpers.write_config(tmp_path / "run.yaml", ba_fixture, tmp_path / "out")
    assert run(config, "cluster") == 2
    assert "run ingest first" in capsys.readouterr().err
    bad = tmp_path / "bad.yaml"
    bad.write_text("tickers: []\n")
    assert run(bad, "ingest") == 2


def test_zero_weeks_gives_empty_dataset(tmp_path, ba_fixture):
    config = helpers.write_config(tmp_path / "run.yaml", ba_fixture, tmp_path / "out", end="2024-05-30")
    (tmp_path / "cassettes").mkdir()
    assert run(config, "ingest") == 0
    assert run(config, "build-dataset") == 0
    assert (tmp_path / "out" / "dataset.jsonl").read_text() == ""


def test_missing_cassette_is_a_hard_failure(pipeline, tmp_path):
    _, config, _, _ = pipeline
    assert run(config, "--mode", "Baseline", "build-dataset") == 2


def test_evaluate_rejects_bad_predictions(pipeline, tmp_path, capsys):
    _, config, _, _ = pipeline
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    assert run(config, "--output-dir", str(tmp_path), "evaluate", "--predictions", str(empty)) == 2
    bad = helpers.write_jsonl(tmp_path / "bad.jsonl", [{"ticker": "BA", "target_start": "2024-06-23", "mode": "HG", "label": "X7"}])
    assert run(config, "--output-dir", str(tmp_path), "evaluate", "--predictions", str(bad)) == 2
    assert "bad.jsonl:1" in capsys.readouterr().err
    assert run(config, "evaluate", "--predictions", str(tmp_path / "absent.jsonl")) == 2


def test_evaluate_accepts_mixed_case_labels(pipeline, tmp_path):
    _, config, out, _ = pipeline
    actuals = helpers.ba_actuals(out / "cache")
    rows = [{"ticker": "ba", "target_start": (s + timedelta(days=7)).isoformat(), "mode": "HG", "label": str(lab).lower()} for s, lab in actuals.items()]
    preds = helpers.write_jsonl(tmp_path / "p.jsonl", rows)
    side = tmp_path / "side"
    side.mkdir()
    (side / "cache").symlink_to(out / "cache")
    assert run(config, "--output-dir", str(side), "evaluate", "--predictions", str(preds)) == 0
    assert json.loads((side / "summary.json").read_text())["HG"]["binary_accuracy"] == 1.0


def test_report_without_evaluation_fails(tmp_path, ba_fixture):
    config = helpers.write_config(tmp_path / "run.yaml", ba_fixture, tmp_path / "out")
    assert run(config, "report") == 2
