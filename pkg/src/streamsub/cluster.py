"""Assemble a multi-worker engine inside one process and drive it with a stream.

Two edge-delivery disciplines are supported, matching the two in-process
transports:

* deterministic: after each routed edge, both message buses are drained to
  quiescence, so a run is an exact function of the input stream;
* delayed: the buses run on a virtual clock advanced to each edge's start
  time, so messages arrive late (or never) in a seeded, reproducible way.
"""

from __future__ import annotations

import heapq
import time
from collections.abc import Iterable, Iterator

from .comms import Communicator, DelayedBus, DeterministicBus
from .edges import TemporalEdge
from .partition import Partitioner
from .planner import QueryPlan
from .query import MembershipRegistry
from .store import GraphStore, MatchSink

TRANSPORT_DETERMINISTIC = "deterministic"
TRANSPORT_DELAYED = "delayed"
TRANSPORTS = (TRANSPORT_DETERMINISTIC, TRANSPORT_DELAYED)


class LocalCluster:
    def __init__(
        self,
        worker_count: int,
        *,
        transport: str = TRANSPORT_DETERMINISTIC,
        seed: int = 0,
        max_latency: float = 0.0,
        drop_probability: float = 0.0,
        membership: MembershipRegistry | None = None,
        keep_probability: float = 1.0,
        bin_count: int = 1 << 12,
        result_capacity: int = 1 << 14,
        request_capacity: int = 1 << 14,
        results_path: str | None = None,
        hash_function: str = "IpHashFunction",
    ) -> None:
        if transport not in TRANSPORTS:
            raise ValueError(f"unknown transport {transport!r} (choose from {TRANSPORTS})")
        self.transport = transport
        self.partitioner = Partitioner(worker_count, hash_function=hash_function)
        if transport == TRANSPORT_DETERMINISTIC:
            self.edge_bus = DeterministicBus()
            self.request_bus = DeterministicBus()
        else:
            self.edge_bus = DelayedBus(seed=seed ^ 0x5EED, max_latency=max_latency, drop_probability=drop_probability)
            self.request_bus = DelayedBus(seed=seed ^ 0xB0B, max_latency=max_latency, drop_probability=drop_probability)
        peers = list(range(worker_count))
        self._results_path = results_path
        self.sinks = [MatchSink() for _ in peers]
        self.workers: list[GraphStore] = []
        for w in peers:
            edge_comm = Communicator(w, peers, self.edge_bus, seed=seed) if worker_count > 1 else None
            request_comm = Communicator(w, peers, self.request_bus, seed=seed + 1) if worker_count > 1 else None
            store = GraphStore(
                w,
                self.partitioner,
                edge_comm=edge_comm,
                request_comm=request_comm,
                membership=membership,
                bin_count=bin_count,
                result_capacity=result_capacity,
                request_capacity=request_capacity,
                keep_probability=keep_probability,
                keep_seed=seed,
                sink=self.sinks[w],
            )
            self.workers.append(store)
        for store in self.workers:
            if store.edge_comm is not None:
                store.edge_comm.start()
            if store.request_comm is not None:
                store.request_comm.start()

    @property
    def worker_count(self) -> int:
        return len(self.workers)

    def register(self, plan: QueryPlan, query_id: str | None = None) -> str:
        if query_id is None:
            query_id = f"q{len(self.workers[0].queries)}"
        for store in self.workers:
            store.register_query(plan, query_id)
        return query_id

    def _drain_buses(self) -> None:
        while self.edge_bus.pending or self.request_bus.pending:
            self.request_bus.drain()
            self.edge_bus.drain()

    def feed_edge(self, edge: TemporalEdge) -> None:
        if self.transport == TRANSPORT_DELAYED:
            self.request_bus.advance_to(edge.start_time)
            self.edge_bus.advance_to(edge.start_time)
        for owner in sorted(self.partitioner.route(edge)):
            self.workers[owner].consume(edge)
        if self.transport == TRANSPORT_DETERMINISTIC:
            self._drain_buses()

    def feed(self, edges: Iterable[TemporalEdge]) -> int:
        count = 0
        for edge in edges:
            self.feed_edge(edge)
            count += 1
        return count

    def finish(self) -> None:
        self._drain_buses()
        for store in self.workers:
            if store.edge_comm is not None:
                store.edge_comm.stop()
            if store.request_comm is not None:
                store.request_comm.stop()
        if self._results_path is not None:
            everything = [m for sink in self.sinks for m in sink.matches]
            everything.sort(key=lambda m: (m.bound_edges[0].start_time, m.query_id, m.edge_ids))
            with open(self._results_path, "w", encoding="utf-8") as handle:
                for match in everything:
                    handle.write(match.format() + "\n")

    def matches(self) -> set[tuple[str, tuple[int, ...]]]:
        """Union of all workers' emissions as (query_id, edge-id tuple) pairs."""
        out: set[tuple[str, tuple[int, ...]]] = set()
        for sink in self.sinks:
            out |= sink.keyed()
        return out

    def match_multiset(self) -> list[tuple[str, tuple[int, ...]]]:
        out = []
        for sink in self.sinks:
            out.extend((m.query_id, m.edge_ids) for m in sink.matches)
        return out

    def metrics(self) -> list[dict[str, int]]:
        return [store.merged_metrics() for store in self.workers]


def merge_streams(streams: list[Iterator[TemporalEdge]]) -> Iterator[TemporalEdge]:
    """Merge per-worker streams into one globally time-ordered stream."""
    return heapq.merge(*streams, key=lambda e: (e.start_time, e.local_id))


class Pacer:
    """Sleep-based rate governor: holds stream time to wall time."""

    def __init__(self) -> None:
        self._wall_start = time.monotonic()
        self._stream_start: float | None = None

    def wait(self, stream_time: float) -> None:
        if self._stream_start is None:
            self._stream_start = stream_time
        target = self._wall_start + (stream_time - self._stream_start)
        delay = target - time.monotonic()
        if delay > 0:
            time.sleep(delay)
