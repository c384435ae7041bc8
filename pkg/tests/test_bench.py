from __future__ import annotations

import json
import random

import pytest

import streamsub.bench as bench
from streamsub.bench import (
    ConfigError,
    ExperimentConfig,
    apply_keep_probability,
    find_max_keeping_pace_rate,
    run_experiment,
)

from conftest import TRIANGLE_BLOCK, WATERING_HOLE_BLOCK
from streamsub.query import MembershipRegistry


def config(**kwargs):
    defaults = dict(
        seed=1,
        worker_count=1,
        vertex_pool_size=20,
        edges_per_worker=500,
        rate_per_worker=50.0,
        query_text=TRIANGLE_BLOCK,
        with_oracle=True,
    )
    defaults.update(kwargs)
    return ExperimentConfig(**defaults)


def test_single_worker_oracle_recall_is_exact():
    report = run_experiment(config())
    assert report.edges_fed == 500
    assert report.expected_matches is not None and report.expected_matches > 0
    assert report.recall == 1.0
    assert report.precision == 1.0
    assert report.keeping_pace


def test_multi_worker_recall_is_exact():
    report = run_experiment(config(worker_count=4, edges_per_worker=250))
    assert report.recall == 1.0
    assert report.precision == 1.0


def test_keep_probability_zero_rejected():
    with pytest.raises(ConfigError):
        config(keep_probability=0.0).validate()
    with pytest.raises(ConfigError):
        config(keep_probability=1.5).validate()


def test_bad_transport_rejected():
    with pytest.raises(ConfigError):
        config(transport="carrier-pigeon").validate()


def test_query_required():
    with pytest.raises(ConfigError):
        ExperimentConfig(seed=1).validate()


def test_apply_keep_probability_always_keeps_at_one():
    rng = random.Random(1)
    assert all(apply_keep_probability(rng, 1.0) for _ in range(1000))
    with pytest.raises(ConfigError):
        apply_keep_probability(rng, 0.0)


def test_apply_keep_probability_binomial_bound():
    rng = random.Random(42)
    n = 1_000_000
    kq = 0.01
    hits = sum(1 for _ in range(n) if apply_keep_probability(rng, kq))
    sigma = (n * kq * (1 - kq)) ** 0.5
    assert abs(hits - n * kq) < 4 * sigma


def test_apply_keep_probability_reproducible():
    rng1, rng2 = random.Random(7), random.Random(7)
    assert [apply_keep_probability(rng1, 0.5) for _ in range(100)] == [
        apply_keep_probability(rng2, 0.5) for _ in range(100)
    ]


def test_smaller_keep_probability_emits_subset():
    full = run_experiment(config(with_oracle=False))
    partial = run_experiment(config(with_oracle=False, keep_probability=0.3))
    assert partial.matches_emitted < full.matches_emitted


def test_delayed_transport_recall_bounded():
    report = run_experiment(
        config(worker_count=4, edges_per_worker=400, transport="delayed", rate_per_worker=25.0)
    )
    assert report.recall is not None and report.recall <= 1.0
    assert report.precision == 1.0


def test_report_json_and_files(tmp_path):
    report_path = tmp_path / "report.json"
    results_path = tmp_path / "matches.txt"
    report = run_experiment(
        config(report_path=str(report_path), results_path=str(results_path))
    )
    payload = json.loads(report_path.read_text())
    for key in (
        "config",
        "edges_fed",
        "wall_seconds",
        "ideal_seconds",
        "keeping_pace",
        "throughput",
        "matches_emitted",
        "recall",
        "per_worker",
    ):
        assert key in payload
    assert payload["matches_emitted"] == report.matches_emitted
    lines = [l for l in results_path.read_text().splitlines() if l]
    assert len(lines) == report.matches_emitted
    assert all(len(line.split("\t")) == 3 for line in lines)  # triangle depth


def test_per_worker_metrics_reported():
    report = run_experiment(config(worker_count=2, edges_per_worker=200))
    assert len(report.per_worker) == 2
    assert all("edges_consumed" in w for w in report.per_worker)


def test_duration_range_must_fit_edge_duration_bound():
    bad = config(duration_range=(0.0, 120.0))
    with pytest.raises(ConfigError):
        run_experiment(bad)


def test_watering_hole_with_registry():
    registry = MembershipRegistry()
    registry.register("Top1000", {f"10.0.0.{i}" for i in range(10)})
    report = run_experiment(
        config(query_text=WATERING_HOLE_BLOCK, vertex_pool_size=30, edges_per_worker=400),
        membership=registry,
    )
    assert report.recall == 1.0 and report.precision == 1.0
    assert report.expected_matches > 0


def test_rate_search_stops_at_first_failure(monkeypatch):
    calls = []

    real_run = bench.run_experiment

    def fake_run(cfg, membership=None):
        calls.append(cfg.rate_per_worker)
        report = bench.ExperimentReport(config={})
        report.keeping_pace = cfg.rate_per_worker <= 100.0
        return report

    monkeypatch.setattr(bench, "run_experiment", fake_run)
    best, reports = find_max_keeping_pace_rate(config(), [50.0, 100.0, 200.0, 400.0])
    assert best == 100.0
    assert calls == [50.0, 100.0, 200.0]
    monkeypatch.setattr(bench, "run_experiment", real_run)


def test_paced_run_throughput_caps_at_offered_rate():
    report = run_experiment(
        config(edges_per_worker=300, rate_per_worker=600.0, pace=True, with_oracle=False)
    )
    assert report.throughput <= 600.0 + 1e-9
    assert report.keeping_pace
