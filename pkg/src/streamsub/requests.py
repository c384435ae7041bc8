"""Outstanding edge requests and the map that matches new edges against them.

A request describes an edge another worker is waiting for: one or both fixed
endpoints plus a start-time window.  Requests are slot-hashed by their bound
endpoints exactly like intermediate results, and expire with their window.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

from .edges import TemporalEdge
from .hashing import stable_hash64

_MAX_LOCK_STRIPES = 1024


@dataclass(frozen=True, slots=True)
class EdgeRequest:
    bound_source: str | None
    bound_target: str | None
    lo: float
    hi: float
    requesting_worker: int
    query_id: str
    step_index: int

    def __post_init__(self) -> None:
        if self.bound_source is None and self.bound_target is None:
            raise ValueError("edge request must bind at least one endpoint")
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or self.lo > self.hi:
            raise ValueError(f"bad request window [{self.lo}, {self.hi}]")

    @property
    def expiry(self) -> float:
        return self.hi

    def is_expired(self, current_time: float) -> bool:
        return current_time > self.hi

    def matches(self, edge: TemporalEdge) -> bool:
        if self.bound_source is not None and edge.source != self.bound_source:
            return False
        if self.bound_target is not None and edge.target != self.bound_target:
            return False
        return self.lo <= edge.start_time <= self.hi

    def key(self) -> tuple:
        return (
            self.requesting_worker,
            self.query_id,
            self.step_index,
            self.bound_source,
            self.bound_target,
            self.lo,
            self.hi,
        )


class RequestMap:
    """Per-worker store of edge requests received from peers."""

    def __init__(self, *, worker_id: int = 0, capacity: int = 1 << 20) -> None:
        if capacity <= 0 or capacity & (capacity - 1):
            raise ValueError(f"capacity must be a power of two, got {capacity}")
        self.worker_id = worker_id
        self.capacity = capacity
        self._slots: list[list[EdgeRequest] | None] = [None] * capacity
        stripes = min(capacity, _MAX_LOCK_STRIPES)
        self._locks = [threading.Lock() for _ in range(stripes)]
        self._stripe_mask = stripes - 1
        self.requests_stored = 0
        self.requests_expired = 0

    @staticmethod
    def _mode(request: EdgeRequest) -> str:
        if request.bound_source is not None and request.bound_target is not None:
            return "both"
        return "source" if request.bound_source is not None else "target"

    def _slot_index(self, mode: str, source: str | None, target: str | None) -> int:
        if mode == "source":
            h = stable_hash64(source)  # type: ignore[arg-type]
        elif mode == "target":
            h = stable_hash64(target)  # type: ignore[arg-type]
        else:
            h = stable_hash64(source) * 31 ^ stable_hash64(target)  # type: ignore[arg-type]
        return h & (self.capacity - 1)

    def _lock_for(self, slot: int) -> threading.Lock:
        return self._locks[slot & self._stripe_mask]

    def add_request(self, request: EdgeRequest) -> None:
        """Store a request; idempotent per request key; self-requests are not kept."""
        if request.requesting_worker == self.worker_id:
            return
        mode = self._mode(request)
        slot = self._slot_index(mode, request.bound_source, request.bound_target)
        key = request.key()
        with self._lock_for(slot):
            stored = self._slots[slot]
            if stored is None:
                stored = self._slots[slot] = []
            for existing in stored:
                if existing.key() == key:
                    return
            stored.append(request)
        self.requests_stored += 1

    def process(self, edge: TemporalEdge) -> list[tuple[int, TemporalEdge]]:
        """Match ``edge`` against stored requests.

        Returns one (worker, edge) send instruction per matching unexpired
        request; expired requests in the touched slots are dropped.
        """
        current = edge.start_time
        sends: list[tuple[int, TemporalEdge]] = []
        passes = (
            ("source", edge.source, None),
            ("target", None, edge.target),
            ("both", edge.source, edge.target),
        )
        for mode, src, trg in passes:
            slot = self._slot_index(mode, src, trg)
            with self._lock_for(slot):
                stored = self._slots[slot]
                if not stored:
                    continue
                kept: list[EdgeRequest] = []
                for req in stored:
                    if req.is_expired(current):
                        self.requests_expired += 1
                        continue
                    kept.append(req)
                    if self._mode(req) == mode and req.matches(edge):
                        sends.append((req.requesting_worker, edge))
                if len(kept) != len(stored):
                    self._slots[slot] = kept
        return sends

    def stored_count(self) -> int:
        total = 0
        for slot, stored in enumerate(self._slots):
            if stored:
                with self._lock_for(slot):
                    total += len(stored)
        return total
