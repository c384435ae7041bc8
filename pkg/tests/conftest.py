from __future__ import annotations

import random

import pytest

from streamsub.edges import TemporalEdge
from streamsub.planner import plan
from streamsub.query import MembershipRegistry
from streamsub.sal import parse_query

TRIANGLE_BLOCK = """{
  x1 e1 x2;
  x2 e2 x3;
  x3 e3 x1;
  starttime(e3) - starttime(e1) <= 10;
  starttime(e1) < starttime(e2);
  starttime(e2) < starttime(e3);
}"""

WATERING_HOLE_BLOCK = """{ target e1 bait;
  target e2 controller;
  starttime(e2) > endtime(e1);
  starttime(e2) - endtime(e1) < 20;
  bait in Top1000;
  controller not in Top1000; }"""

FULL_PROGRAM = """//Preamble Statements
WindowSize = 1000

// Connection Statements
Netflows = VastStream("localhost", 9999);

// Partition Statements
PARTITION Netflows By SourceIp, DestIp;
HASH SourceIp WITH IpHashFunction;
HASH DestIp WITH IpHashFunction;

// Defining Features
Top1000 = FOREACH Netflows
            GENERATE topk(DestIp, 100000,
                         10000, 1000);

// Subgraph definition
Subgraph on Netflows with source(SourceIp)
  and target(DestIp)
{
  target e1 bait;
  target e2 controller;
  starttime(e2) > endtime(e1);
  starttime(e2) - endtime(e1) < 20;
  bait in Top1000;
  controller not in Top1000;
}
"""


@pytest.fixture(scope="session")
def triangle_query():
    return parse_query(TRIANGLE_BLOCK)


@pytest.fixture(scope="session")
def triangle_plan(triangle_query):
    return plan(triangle_query)


@pytest.fixture(scope="session")
def watering_query():
    return parse_query(WATERING_HOLE_BLOCK)


@pytest.fixture(scope="session")
def watering_plan(watering_query):
    return plan(watering_query)


@pytest.fixture()
def top_registry():
    registry = MembershipRegistry()
    registry.register("Top1000", {"popular"})
    return registry


def make_edge(source: str, target: str, t: float, duration: float = 0.0, local_id: int | None = None) -> TemporalEdge:
    if local_id is None:
        local_id = int(t * 1000) + hash((source, target)) % 997
    return TemporalEdge(source=source, target=target, start_time=t, duration=duration, local_id=local_id)


def random_stream(
    n: int,
    vertex_count: int,
    rate: float,
    seed: int,
    *,
    max_duration: float = 1.0,
    id_base: int = 1,
) -> list[TemporalEdge]:
    """Time-ordered random stream with uniform endpoints and no self-loops."""
    rng = random.Random(seed)
    vertices = [f"v{i}" for i in range(vertex_count)]
    edges = []
    for k in range(n):
        source = rng.choice(vertices)
        target = rng.choice(vertices)
        while target == source:
            target = rng.choice(vertices)
        edges.append(
            TemporalEdge(
                source=source,
                target=target,
                start_time=k / rate,
                duration=rng.uniform(0.0, max_duration),
                local_id=id_base + k,
            )
        )
    return edges


TRIANGLE_EDGES = [
    ("A", "B", 0.0),
    ("B", "C", 1.0),
    ("C", "A", 5.0),
]


def triangle_stream() -> list[TemporalEdge]:
    return [make_edge(s, t, at, 0.0, i + 1) for i, (s, t, at) in enumerate(TRIANGLE_EDGES)]
