"""Experiment harness: run queries over generated streams and report results.

A run feeds ``worker_count`` synthetic per-worker streams (merged into one
time-ordered stream) through an in-process cluster, then reports per-worker
and aggregate counters, achieved throughput, and, when requested, recall
against the brute-force reference matcher.

A run "keeps pace" at rate r when its wall time stays within 15 seconds of
the ideal time (edges per worker) / r.  Runs are aborted as soon as that
budget is exhausted, which keeps rate searches bounded.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass, field, asdict

from .cluster import (
    TRANSPORT_DELAYED,
    TRANSPORT_DETERMINISTIC,
    TRANSPORTS,
    LocalCluster,
    Pacer,
    merge_streams,
)
from .ingest import GeneratorConfig, generate_edges
from .oracle import enumerate_matches
from .planner import QueryPlan, plan as plan_query
from .query import MembershipRegistry
from .sal import parse_query_or_program

KEEPING_PACE_SLACK_SECONDS = 15.0


class ConfigError(Exception):
    pass


def apply_keep_probability(rng: random.Random, keep_probability: float) -> bool:
    """True with probability ``keep_probability``; kq = 1 always keeps."""
    if not 0.0 < keep_probability <= 1.0:
        raise ConfigError(f"keep probability must be in (0, 1], got {keep_probability}")
    return keep_probability >= 1.0 or rng.random() < keep_probability


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    worker_count: int = 1
    vertex_pool_size: int = 100
    edges_per_worker: int = 1000
    rate_per_worker: float = 1000.0
    transport: str = TRANSPORT_DETERMINISTIC
    keep_probability: float = 1.0
    query_text: str | None = None
    query_path: str | None = None
    with_oracle: bool = False
    pace: bool = False
    max_latency: float | None = None
    drop_probability: float = 0.0
    max_edge_duration: float = 60.0
    default_extent: float | None = None
    injective: bool = False
    duration_range: tuple[float, float] = (0.0, 1.0)
    results_path: str | None = None
    report_path: str | None = None
    abort_over_budget: bool = True

    def validate(self) -> None:
        if self.worker_count < 1:
            raise ConfigError("worker_count must be >= 1")
        if not 0.0 < self.keep_probability <= 1.0:
            raise ConfigError(f"keep_probability must be in (0, 1], got {self.keep_probability}")
        if self.transport not in TRANSPORTS:
            raise ConfigError(f"transport must be one of {TRANSPORTS}")
        if self.rate_per_worker <= 0:
            raise ConfigError("rate_per_worker must be positive")
        if self.query_text is None and self.query_path is None:
            raise ConfigError("a query (text or path) is required")
        if not 0.0 <= self.drop_probability <= 1.0:
            raise ConfigError("drop_probability must be in [0, 1]")


@dataclass
class ExperimentReport:
    config: dict
    edges_fed: int = 0
    wall_seconds: float = 0.0
    ideal_seconds: float = 0.0
    keeping_pace: bool = True
    aborted: bool = False
    interrupted: bool = False
    throughput: float = 0.0
    matches_emitted: int = 0
    expected_matches: int | None = None
    recall: float | None = None
    precision: float | None = None
    per_worker: list[dict] = field(default_factory=list)
    transport: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def summary_table(self) -> str:
        rows = [
            ("workers", len(self.per_worker)),
            ("edges fed", self.edges_fed),
            ("wall seconds", f"{self.wall_seconds:.3f}"),
            ("ideal seconds", f"{self.ideal_seconds:.3f}"),
            ("keeping pace", self.keeping_pace),
            ("throughput edges/s", f"{self.throughput:.1f}"),
            ("matches emitted", self.matches_emitted),
        ]
        if self.expected_matches is not None:
            rows.append(("expected matches", self.expected_matches))
            rows.append(("recall", f"{self.recall:.4f}" if self.recall is not None else "n/a"))
            rows.append(("precision", f"{self.precision:.4f}" if self.precision is not None else "n/a"))
        width = max(len(str(k)) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def load_query_plan(config: ExperimentConfig) -> QueryPlan:
    if config.query_text is not None:
        text = config.query_text
    else:
        assert config.query_path is not None
        with open(config.query_path, "r", encoding="utf-8") as handle:
            text = handle.read()
    query = parse_query_or_program(text)
    return plan_query(
        query,
        max_edge_duration=config.max_edge_duration,
        default_extent=config.default_extent,
    )


def run_experiment(
    config: ExperimentConfig, membership: MembershipRegistry | None = None
) -> ExperimentReport:
    config.validate()
    query_plan = load_query_plan(config)
    if config.duration_range[1] > config.max_edge_duration:
        raise ConfigError(
            "generated durations may exceed max_edge_duration; widen max_edge_duration"
        )

    gen_config = GeneratorConfig(
        vertex_pool_size=config.vertex_pool_size,
        edges_per_worker=config.edges_per_worker,
        rate_per_worker=config.rate_per_worker,
        seed=config.seed,
        worker_count=config.worker_count,
        duration_range=config.duration_range,
    )
    max_latency = config.max_latency
    if max_latency is None:
        max_latency = query_plan.max_extent / 2.0
    cluster = LocalCluster(
        config.worker_count,
        transport=config.transport,
        seed=config.seed,
        max_latency=max_latency,
        drop_probability=config.drop_probability,
        membership=membership,
        keep_probability=config.keep_probability,
        results_path=config.results_path,
    )
    query_id = cluster.register(query_plan)

    report = ExperimentReport(config=asdict(config))
    report.ideal_seconds = config.edges_per_worker / config.rate_per_worker
    budget = report.ideal_seconds + KEEPING_PACE_SLACK_SECONDS

    streams = [generate_edges(gen_config, w) for w in range(config.worker_count)]
    merged = merge_streams(streams)
    fed_edges = [] if config.with_oracle else None
    pacer = Pacer() if config.pace else None

    start = time.monotonic()
    try:
        for edge in merged:
            if pacer is not None:
                pacer.wait(edge.start_time)
            cluster.feed_edge(edge)
            if fed_edges is not None:
                fed_edges.append(edge)
            report.edges_fed += 1
            if config.abort_over_budget and time.monotonic() - start > budget:
                report.aborted = True
                break
    except KeyboardInterrupt:
        report.interrupted = True
    cluster.finish()
    report.wall_seconds = time.monotonic() - start
    report.keeping_pace = (not report.aborted) and report.wall_seconds <= budget
    # A paced run cannot sustain more than the offered rate; flooring the
    # denominator at the ideal duration keeps sleep jitter out of the number.
    denominator = max(report.wall_seconds, report.ideal_seconds) if config.pace else report.wall_seconds
    report.throughput = report.edges_fed / denominator if denominator else 0.0

    emitted = cluster.match_multiset()
    report.matches_emitted = len(emitted)
    report.per_worker = [
        {"worker": i, **metrics} for i, metrics in enumerate(cluster.metrics())
    ]
    report.transport = {
        "edge_bus": {
            "delivered": cluster.edge_bus.delivered,
            "dropped": getattr(cluster.edge_bus, "dropped", 0),
        },
        "request_bus": {
            "delivered": cluster.request_bus.delivered,
            "dropped": getattr(cluster.request_bus, "dropped", 0),
        },
    }
    if fed_edges is not None and not report.aborted and not report.interrupted:
        expected = enumerate_matches(
            query_plan, fed_edges, membership=membership, injective=config.injective
        )
        report.expected_matches = len(expected)
        emitted_set = {ids for qid, ids in emitted if qid == query_id}
        good = emitted_set & expected
        report.recall = len(good) / len(expected) if expected else 1.0
        report.precision = len(good) / len(emitted_set) if emitted_set else 1.0
    if config.report_path:
        with open(config.report_path, "w", encoding="utf-8") as handle:
            handle.write(report.to_json() + "\n")
    return report


def find_max_keeping_pace_rate(
    config: ExperimentConfig,
    rates: list[float],
    membership: MembershipRegistry | None = None,
) -> tuple[float | None, list[ExperimentReport]]:
    """Probe rates in ascending order; return the highest that keeps pace.

    Stops at the first rate that falls behind (work grows with rate, so the
    keeping-pace predicate is monotone along the grid).
    """
    from dataclasses import replace

    best: float | None = None
    reports: list[ExperimentReport] = []
    for rate in sorted(rates):
        probe = replace(config, rate_per_worker=rate)
        report = run_experiment(probe, membership=membership)
        reports.append(report)
        if report.keeping_pace:
            best = rate
        else:
            break
    return best, reports
