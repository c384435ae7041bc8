"""Intermediate query results and the slot-hashed map that advances them.

An intermediate result binds a prefix of a plan's edges.  The map stores each
incomplete result in a slot keyed by the endpoint values its *next* edge is
waiting for (source, target, or both), so an arriving edge only touches the
slots that could possibly match it.  Each result is stored under exactly one
keying mode; the per-mode checks during processing keep the three lookup
passes disjoint, which is what prevents duplicate extensions.
"""

from __future__ import annotations

import heapq
import threading
from collections import deque
from collections.abc import Callable, Iterable

from .edges import TemporalEdge
from .graph_index import GraphIndex
from .hashing import stable_hash64
from .planner import PlanStep, QueryPlan, satisfied_at
from .query import MembershipRegistry
from .requests import EdgeRequest

KEY_SOURCE = "source"
KEY_TARGET = "target"
KEY_BOTH = "both"

_MAX_LOCK_STRIPES = 1024


class IntermediateResult:
    """A partial (or complete) binding of plan edges, immutable once built."""

    __slots__ = ("plan", "query_id", "bound_edges", "variables", "expiry", "_ids")

    def __init__(
        self,
        plan: QueryPlan,
        query_id: str,
        bound_edges: tuple[TemporalEdge, ...],
        variables: dict[str, str],
        ids: frozenset[int],
    ) -> None:
        self.plan = plan
        self.query_id = query_id
        self.bound_edges = bound_edges
        self.variables = variables
        self.expiry = bound_edges[0].start_time + plan.max_extent
        self._ids = ids

    @classmethod
    def seed(cls, plan: QueryPlan, query_id: str, edge: TemporalEdge) -> IntermediateResult:
        step = plan.steps[0].pattern
        variables = {step.source: edge.source, step.target: edge.target}
        return cls(plan, query_id, (edge,), variables, frozenset((edge.local_id,)))

    @property
    def complete(self) -> bool:
        return len(self.bound_edges) == self.plan.depth

    @property
    def next_step(self) -> PlanStep | None:
        if self.complete:
            return None
        return self.plan.steps[len(self.bound_edges)]

    @property
    def edge_ids(self) -> tuple[int, ...]:
        return tuple(e.local_id for e in self.bound_edges)

    def is_expired(self, current_time: float) -> bool:
        return current_time > self.expiry

    def extend(
        self, edge: TemporalEdge, membership: MembershipRegistry | None = None
    ) -> IntermediateResult | None:
        """New result with ``edge`` bound to the next step, or None if inadmissible."""
        if self.complete or edge.local_id in self._ids:
            return None
        step = len(self.bound_edges)
        if not satisfied_at(self.plan, step, self.bound_edges, edge, membership):
            return None
        pattern = self.plan.steps[step].pattern
        variables = dict(self.variables)
        variables[pattern.source] = edge.source
        variables[pattern.target] = edge.target
        return IntermediateResult(
            self.plan,
            self.query_id,
            self.bound_edges + (edge,),
            variables,
            self._ids | {edge.local_id},
        )

    def key_mode(self) -> str:
        step = self.next_step
        assert step is not None
        if step.bound_source and step.bound_target:
            return KEY_BOTH
        return KEY_SOURCE if step.bound_source else KEY_TARGET

    def key_vertices(self) -> tuple[str | None, str | None]:
        """(bound source vertex, bound target vertex) the next edge must carry."""
        step = self.next_step
        assert step is not None
        src = self.variables.get(step.pattern.source) if step.bound_source else None
        trg = self.variables.get(step.pattern.target) if step.bound_target else None
        return src, trg

    def window(self) -> tuple[float, float]:
        """Admissible start-time interval for the next edge (absolute seconds)."""
        step = self.next_step
        assert step is not None
        anchor = self.bound_edges[0].start_time
        return anchor + step.lo, anchor + step.hi

    def to_request(self, worker_id: int) -> EdgeRequest:
        src, trg = self.key_vertices()
        lo, hi = self.window()
        return EdgeRequest(
            bound_source=src,
            bound_target=trg,
            lo=lo,
            hi=hi,
            requesting_worker=worker_id,
            query_id=self.query_id,
            step_index=len(self.bound_edges),
        )

    def format(self) -> str:
        return "\t".join(e.format() for e in self.bound_edges)

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"IntermediateResult({self.query_id}, {self.edge_ids})"


def _slot_key(mode: str, source: str | None, target: str | None) -> int:
    if mode == KEY_SOURCE:
        return stable_hash64(source)  # type: ignore[arg-type]
    if mode == KEY_TARGET:
        return stable_hash64(target)  # type: ignore[arg-type]
    return stable_hash64(source) * 31 ^ stable_hash64(target)  # type: ignore[arg-type]


class ResultMap:
    """Slot-hashed store of intermediate results for one worker.

    ``process`` advances stored results with a newly seen edge; ``add`` admits
    a fresh result.  Both expand against the local graph to a fixed point,
    emit completed matches to the sink, store what remains, and return edge
    requests describing the next edge of everything stored.
    """

    def __init__(
        self,
        csr: GraphIndex,
        csc: GraphIndex,
        *,
        worker_id: int = 0,
        capacity: int = 1 << 20,
        sink: Callable[[IntermediateResult], None] | None = None,
        membership: MembershipRegistry | None = None,
    ) -> None:
        if capacity <= 0 or capacity & (capacity - 1):
            raise ValueError(f"capacity must be a power of two, got {capacity}")
        self.csr = csr
        self.csc = csc
        self.worker_id = worker_id
        self.capacity = capacity
        self.sink = sink or (lambda result: None)
        self.membership = membership
        self._slots: list[list[IntermediateResult] | None] = [None] * capacity
        stripes = min(capacity, _MAX_LOCK_STRIPES)
        self._locks = [threading.Lock() for _ in range(stripes)]
        self._stripe_mask = stripes - 1
        # Concurrent consume threads can race the slot scan against the
        # graph expansion and build the same completion twice; emissions are
        # deduplicated here, pruned once their window has passed.
        self._emitted_lock = threading.Lock()
        self._emitted: set[tuple[str, tuple[int, ...]]] = set()
        self._emitted_heap: list[tuple[float, str, tuple[int, ...]]] = []
        self.results_created = 0
        self.results_expired = 0
        self.matches_emitted = 0
        self.duplicate_matches_suppressed = 0

    def _slot_index(self, mode: str, source: str | None, target: str | None) -> int:
        return _slot_key(mode, source, target) & (self.capacity - 1)

    def _lock_for(self, slot: int) -> threading.Lock:
        return self._locks[slot & self._stripe_mask]

    def process(self, edge: TemporalEdge) -> list[EdgeRequest]:
        """Advance every stored result whose next step matches ``edge``.

        Pre-existing results stay in place so they can match later edges too.
        Expired results found in the touched slots are dropped.  Returns the
        edge requests for the next steps of all newly stored results.
        """
        current = edge.start_time
        generated: list[IntermediateResult] = []
        passes = (
            (KEY_SOURCE, edge.source, None),
            (KEY_TARGET, None, edge.target),
            (KEY_BOTH, edge.source, edge.target),
        )
        for mode, src, trg in passes:
            slot = self._slot_index(mode, src, trg)
            with self._lock_for(slot):
                stored = self._slots[slot]
                if not stored:
                    continue
                kept: list[IntermediateResult] = []
                for r in stored:
                    if r.is_expired(current):
                        self.results_expired += 1
                        continue
                    kept.append(r)
                    if r.key_mode() == mode:
                        extended = r.extend(edge, self.membership)
                        if extended is not None:
                            generated.append(extended)
                if len(kept) != len(stored):
                    self._slots[slot] = kept
        generated = self.process_against_graph(generated)
        requests: list[EdgeRequest] = []
        for g in generated:
            requests.extend(self._add_nocheck(g))
        return requests

    def add(self, result: IntermediateResult) -> list[EdgeRequest]:
        """Admit a new result, expanding it against local graph knowledge first."""
        generated = self.process_against_graph([result])
        requests: list[EdgeRequest] = []
        for g in generated:
            requests.extend(self._add_nocheck(g))
        return requests

    def process_against_graph(
        self, generation: Iterable[IntermediateResult]
    ) -> list[IntermediateResult]:
        """Close ``generation`` under single-edge extension using the local indexes."""
        out: list[IntermediateResult] = []
        frontier = deque(generation)
        while frontier:
            r = frontier.popleft()
            out.append(r)
            if r.complete:
                continue
            for edge in self._candidates(r):
                extended = r.extend(edge, self.membership)
                if extended is not None:
                    frontier.append(extended)
        return out

    def _candidates(self, r: IntermediateResult) -> list[TemporalEdge]:
        src, trg = r.key_vertices()
        lo, hi = r.window()
        if src is not None:
            return self.csr.find_edges(src, trg, lo, hi)
        return self.csc.find_edges(trg, None, lo, hi)  # type: ignore[arg-type]

    def _emit_once(self, result: IntermediateResult) -> None:
        key = (result.query_id, result.edge_ids)
        anchor = result.bound_edges[0].start_time
        cutoff = result.bound_edges[-1].start_time - result.plan.max_extent
        with self._emitted_lock:
            while self._emitted_heap and self._emitted_heap[0][0] < cutoff:
                _, qid, ids = heapq.heappop(self._emitted_heap)
                self._emitted.discard((qid, ids))
            if key in self._emitted:
                self.duplicate_matches_suppressed += 1
                return
            self._emitted.add(key)
            heapq.heappush(self._emitted_heap, (anchor, key[0], key[1]))
            self.matches_emitted += 1
        self.sink(result)

    def _add_nocheck(self, result: IntermediateResult) -> list[EdgeRequest]:
        if result.complete:
            self._emit_once(result)
            return []
        src, trg = result.key_vertices()
        slot = self._slot_index(result.key_mode(), src, trg)
        current = result.bound_edges[-1].start_time
        with self._lock_for(slot):
            stored = self._slots[slot]
            if stored is None:
                stored = self._slots[slot] = []
            elif stored:
                kept = [r for r in stored if not r.is_expired(current)]
                if len(kept) != len(stored):
                    self.results_expired += len(stored) - len(kept)
                    self._slots[slot] = kept
                    stored = kept
            stored.append(result)
            self.results_created += 1
        return [result.to_request(self.worker_id)]

    def stored_count(self) -> int:
        total = 0
        for slot, stored in enumerate(self._slots):
            if stored:
                with self._lock_for(slot):
                    total += len(stored)
        return total
