"""Per-worker orchestration of indexes, result/request maps, and communicators.

``consume`` runs the five-step pipeline for every locally routed edge:

1. index the edge (by source and by target),
2. advance stored intermediate results with it,
3. seed new step-0 results for registered queries (only on the worker owning
   the edge's source vertex, and subject to the keep probability),
4. match it against outstanding edge requests and forward accordingly,
5. send out the edge requests accumulated by steps 2 and 3.

Edges received from peers run only step 2: indexing or seeding them again on
the receiving worker would duplicate matches.  A short-horizon dedup table
keyed by edge id drops repeat deliveries (the same edge can legitimately
arrive via routing and via one or two request forwards).
"""

from __future__ import annotations

import heapq
import json
import random
import threading
from collections.abc import Callable

from .comms import Communicator, CommsError
from .edges import TemporalEdge
from .graph_index import BY_SOURCE, BY_TARGET, GraphIndex
from .partition import Partitioner
from .planner import QueryPlan, satisfied_at
from .query import MembershipRegistry
from .requests import EdgeRequest, RequestMap
from .results import IntermediateResult, ResultMap
from .wire import WireError, decode_message, encode_edge, encode_request


class DuplicateQueryId(Exception):
    pass


class Metrics:
    """Thread-safe named counters, reported as key=value text or JSON."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._counts: dict[str, int] = {}

    def incr(self, name: str, n: int = 1) -> None:
        with self._lock:
            self._counts[name] = self._counts.get(name, 0) + n

    def get(self, name: str) -> int:
        with self._lock:
            return self._counts.get(name, 0)

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return dict(sorted(self._counts.items()))

    def report(self) -> str:
        return "\n".join(f"{k}={v}" for k, v in self.snapshot().items())

    def to_json(self) -> str:
        return json.dumps(self.snapshot(), indent=2)


class MatchSink:
    """Default output sink: collects matches in memory, optionally to a file.

    File format: one line per match, tab-separated edges in plan order, each
    edge rendered as ``source,target,startTime,duration``.
    """

    def __init__(self, path: str | None = None) -> None:
        self._lock = threading.Lock()
        self.matches: list[IntermediateResult] = []
        self._file = open(path, "w", encoding="utf-8") if path else None

    def __call__(self, result: IntermediateResult) -> None:
        with self._lock:
            self.matches.append(result)
            if self._file is not None:
                self._file.write(result.format() + "\n")

    def close(self) -> None:
        with self._lock:
            if self._file is not None:
                self._file.close()
                self._file = None

    def keyed(self) -> set[tuple[str, tuple[int, ...]]]:
        with self._lock:
            return {(m.query_id, m.edge_ids) for m in self.matches}


_SEEN_CONSUMED = 2
_SEEN_REMOTE = 1


class _SeenEdges:
    """Dedup table of recently processed edge ids with lazy horizon pruning."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._state: dict[int, int] = {}
        self._heap: list[tuple[float, int]] = []

    def mark(self, edge: TemporalEdge, state: int, cutoff: float) -> int:
        """Record ``state`` for the edge; returns the previous state (0 if new)."""
        with self._lock:
            while self._heap and self._heap[0][0] < cutoff:
                _, stale = heapq.heappop(self._heap)
                self._state.pop(stale, None)
            prev = self._state.get(edge.local_id, 0)
            if state > prev:
                self._state[edge.local_id] = state
                if prev == 0:
                    heapq.heappush(self._heap, (edge.start_time, edge.local_id))
            return prev


class GraphStore:
    def __init__(
        self,
        worker_id: int,
        partitioner: Partitioner,
        *,
        edge_comm: Communicator | None = None,
        request_comm: Communicator | None = None,
        membership: MembershipRegistry | None = None,
        bin_count: int = 1 << 16,
        result_capacity: int = 1 << 20,
        request_capacity: int = 1 << 20,
        keep_probability: float = 1.0,
        keep_seed: int = 0,
        sink: Callable[[IntermediateResult], None] | None = None,
    ) -> None:
        if not 0.0 < keep_probability <= 1.0:
            raise ValueError(f"keep_probability must be in (0, 1], got {keep_probability}")
        self.worker_id = worker_id
        self.partitioner = partitioner
        self.membership = membership
        self.keep_probability = keep_probability
        self._keep_rng = random.Random((keep_seed << 20) ^ worker_id)
        self.metrics = Metrics()
        self.sink = sink if sink is not None else MatchSink()
        self.csr = GraphIndex(BY_SOURCE, bin_count=bin_count, max_query_duration=0.0)
        self.csc = GraphIndex(BY_TARGET, bin_count=bin_count, max_query_duration=0.0)
        self.result_map = ResultMap(
            self.csr,
            self.csc,
            worker_id=worker_id,
            capacity=result_capacity,
            sink=self._emit,
            membership=membership,
        )
        self.request_map = RequestMap(worker_id=worker_id, capacity=request_capacity)
        self.queries: dict[str, QueryPlan] = {}
        self.edge_comm = edge_comm
        self.request_comm = request_comm
        self._seen = _SeenEdges()
        if edge_comm is not None:
            edge_comm.register_callback(self._edge_callback)
        if request_comm is not None:
            request_comm.register_callback(self._request_callback)

    # -- query registration ------------------------------------------------

    def register_query(self, plan: QueryPlan, query_id: str | None = None) -> str:
        if query_id is None:
            query_id = f"q{len(self.queries)}"
        if query_id in self.queries:
            raise DuplicateQueryId(query_id)
        for vc in plan.query.vertex_constraints:
            if self.membership is None or vc.set_name not in self.membership:
                raise KeyError(
                    f"query {query_id!r} needs membership set {vc.set_name!r}, not registered"
                )
        self.queries[query_id] = plan
        horizon = max(p.max_extent for p in self.queries.values())
        self.csr.max_query_duration = horizon
        self.csc.max_query_duration = horizon
        return query_id

    @property
    def horizon(self) -> float:
        return self.csr.max_query_duration

    # -- consume pipeline ----------------------------------------------------

    def consume(self, edge: TemporalEdge) -> None:
        cutoff = edge.start_time - self.horizon
        prev = self._seen.mark(edge, _SEEN_CONSUMED, cutoff)
        if prev == _SEEN_CONSUMED:
            self.metrics.incr("duplicate_edges_dropped")
            return
        self.metrics.incr("edges_consumed")
        self.csr.add_edge(edge)
        self.csc.add_edge(edge)
        requests: list[EdgeRequest] = []
        if prev != _SEEN_REMOTE:
            # A remote copy already ran the result-map pass; repeating it
            # would extend the same stored results twice.
            requests.extend(self.result_map.process(edge))
        if self.partitioner.owner(edge.source) == self.worker_id and self._keep():
            requests.extend(self.check_queries(edge))
        for worker, found in self.request_map.process(edge):
            self._forward_edge(worker, found)
        self._send_requests(requests)

    def check_queries(self, edge: TemporalEdge) -> list[EdgeRequest]:
        requests: list[EdgeRequest] = []
        for query_id, plan in self.queries.items():
            if satisfied_at(plan, 0, (), edge, self.membership):
                seed = IntermediateResult.seed(plan, query_id, edge)
                requests.extend(self.result_map.add(seed))
        return requests

    def _keep(self) -> bool:
        if self.keep_probability >= 1.0:
            return True
        return self._keep_rng.random() < self.keep_probability

    # -- remote message handling ---------------------------------------------

    def _edge_callback(self, payload: bytes) -> None:
        try:
            message = decode_message(payload)
        except WireError:
            self.metrics.incr("messages_dropped")
            return
        if not isinstance(message, TemporalEdge):
            self.metrics.incr("messages_dropped")
            return
        self.on_remote_edge_received(message)

    def _request_callback(self, payload: bytes) -> None:
        try:
            message = decode_message(payload)
        except WireError:
            self.metrics.incr("messages_dropped")
            return
        if not isinstance(message, EdgeRequest):
            self.metrics.incr("messages_dropped")
            return
        self.on_edge_request_received(message)

    def on_remote_edge_received(self, edge: TemporalEdge) -> None:
        """An edge forwarded by a peer: advance results only.

        The edge is not indexed locally and never seeds step-0 results; its
        owner workers already did both.
        """
        self.metrics.incr("remote_edges_received")
        cutoff = edge.start_time - self.horizon
        prev = self._seen.mark(edge, _SEEN_REMOTE, cutoff)
        if prev != 0:
            self.metrics.incr("duplicate_edges_dropped")
            return
        requests = self.result_map.process(edge)
        self._send_requests(requests)

    def on_edge_request_received(self, request: EdgeRequest) -> None:
        """A peer's request: store it, then serve anything already indexed."""
        self.metrics.incr("requests_received")
        self.request_map.add_request(request)
        for found in self._request_against_graph(request):
            self._forward_edge(request.requesting_worker, found)

    def _request_against_graph(self, request: EdgeRequest) -> list[TemporalEdge]:
        if request.bound_source is not None:
            return self.csr.find_edges(request.bound_source, request.bound_target, request.lo, request.hi)
        return self.csc.find_edges(request.bound_target, None, request.lo, request.hi)  # type: ignore[arg-type]

    # -- outbound ------------------------------------------------------------

    def _emit(self, result: IntermediateResult) -> None:
        self.metrics.incr("matches_emitted")
        self.sink(result)

    def _forward_edge(self, worker: int, edge: TemporalEdge) -> None:
        if worker == self.worker_id or self.edge_comm is None:
            return
        try:
            self.edge_comm.send(worker, encode_edge(edge))
        except CommsError:
            self.metrics.incr("send_failures")
            return
        self.metrics.incr("edges_forwarded")

    def _send_requests(self, requests: list[EdgeRequest]) -> None:
        if self.request_comm is None or not requests:
            return
        for request in requests:
            owners = set()
            if request.bound_source is not None:
                owners.add(self.partitioner.owner(request.bound_source))
            if request.bound_target is not None:
                owners.add(self.partitioner.owner(request.bound_target))
            owners.discard(self.worker_id)
            for worker in sorted(owners):
                try:
                    self.request_comm.send(worker, encode_request(request))
                except CommsError:
                    self.metrics.incr("send_failures")
                    continue
                self.metrics.incr("requests_sent")

    # -- reporting -----------------------------------------------------------

    def merged_metrics(self) -> dict[str, int]:
        merged = self.metrics.snapshot()
        merged["results_created"] = self.result_map.results_created
        merged["results_expired"] = self.result_map.results_expired
        merged["requests_stored"] = self.request_map.requests_stored
        merged["requests_expired"] = self.request_map.requests_expired
        return merged

    def report(self) -> str:
        return "\n".join(f"{k}={v}" for k, v in sorted(self.merged_metrics().items()))
