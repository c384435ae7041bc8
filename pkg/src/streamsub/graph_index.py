"""Hashed, expiring adjacency index over recent edges.

Two key modes cover both lookup directions: BY_SOURCE answers "edges leaving
vertex v" and BY_TARGET answers "edges entering v".  Edges are binned by a
stable hash of the key vertex; each bin maps vertices to their edge lists.
Old edges are purged lazily whenever a vertex list is touched: an edge is
expired once its end time falls more than ``max_query_duration`` behind the
newest start time seen by this index.
"""

from __future__ import annotations

import math
import threading

from .edges import TemporalEdge
from .hashing import stable_hash64

BY_SOURCE = "source"
BY_TARGET = "target"

_MAX_LOCK_STRIPES = 1024


class GraphIndex:
    def __init__(
        self,
        key_mode: str,
        *,
        bin_count: int = 1 << 16,
        max_query_duration: float = math.inf,
    ) -> None:
        if key_mode not in (BY_SOURCE, BY_TARGET):
            raise ValueError(f"key_mode must be {BY_SOURCE!r} or {BY_TARGET!r}")
        if bin_count <= 0 or bin_count & (bin_count - 1):
            raise ValueError(f"bin_count must be a power of two, got {bin_count}")
        self.key_mode = key_mode
        self.bin_count = bin_count
        self.max_query_duration = max_query_duration
        self._bins: list[dict[str, list[TemporalEdge]] | None] = [None] * bin_count
        stripes = min(bin_count, _MAX_LOCK_STRIPES)
        self._locks = [threading.Lock() for _ in range(stripes)]
        self._stripe_mask = stripes - 1
        self._time_lock = threading.Lock()
        self._last_observed = -math.inf
        self.dropped_expired = 0

    def _key(self, edge: TemporalEdge) -> str:
        return edge.source if self.key_mode == BY_SOURCE else edge.target

    def _lock_for(self, bin_index: int) -> threading.Lock:
        return self._locks[bin_index & self._stripe_mask]

    @property
    def last_observed_time(self) -> float:
        return self._last_observed

    def _advance_time(self, t: float) -> float:
        with self._time_lock:
            if t > self._last_observed:
                self._last_observed = t
            return self._last_observed

    @staticmethod
    def _purge(edges: list[TemporalEdge], cutoff: float) -> None:
        for e in edges:
            if e.end_time < cutoff:
                edges[:] = [x for x in edges if x.end_time >= cutoff]
                return

    def add_edge(self, edge: TemporalEdge) -> None:
        last = self._advance_time(edge.start_time)
        cutoff = last - self.max_query_duration
        key = self._key(edge)
        bin_index = stable_hash64(key) & (self.bin_count - 1)
        with self._lock_for(bin_index):
            bucket = self._bins[bin_index]
            if bucket is None:
                bucket = self._bins[bin_index] = {}
            edges = bucket.get(key)
            if edges is None:
                edges = bucket[key] = []
            else:
                self._purge(edges, cutoff)
            if edge.end_time < cutoff:
                self.dropped_expired += 1
                return
            edges.append(edge)

    def find_edges(
        self,
        key_vertex: str,
        other_vertex: str | None = None,
        lo: float = -math.inf,
        hi: float = math.inf,
    ) -> list[TemporalEdge]:
        """Stored, unexpired edges keyed by ``key_vertex`` with start time in [lo, hi].

        ``other_vertex`` additionally pins the non-key endpoint.
        """
        cutoff = self._last_observed - self.max_query_duration
        bin_index = stable_hash64(key_vertex) & (self.bin_count - 1)
        out: list[TemporalEdge] = []
        with self._lock_for(bin_index):
            bucket = self._bins[bin_index]
            if bucket is None:
                return out
            edges = bucket.get(key_vertex)
            if not edges:
                return out
            self._purge(edges, cutoff)
            by_target = self.key_mode == BY_SOURCE
            for e in edges:
                if not lo <= e.start_time <= hi:
                    continue
                if other_vertex is not None:
                    other = e.target if by_target else e.source
                    if other != other_vertex:
                        continue
                out.append(e)
        return out

    def snapshot(self) -> list[TemporalEdge]:
        """All currently stored edges, including stale ones not yet purged."""
        out: list[TemporalEdge] = []
        for bin_index, bucket in enumerate(self._bins):
            if bucket is None:
                continue
            with self._lock_for(bin_index):
                for edges in bucket.values():
                    out.extend(edges)
        return out
