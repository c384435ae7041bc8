"""Temporal edge primitives shared by every engine component."""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field


def format_seconds(value: float) -> str:
    """Shortest text that parses back to exactly this value."""
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


@dataclass(frozen=True, slots=True)
class TemporalEdge:
    """A directed edge observed on the stream.

    ``start_time`` and ``duration`` are seconds; ``payload`` carries the raw
    source tuple (e.g. the netflow line) and is never interpreted by the
    engine.  ``local_id`` uniquely identifies this concrete edge observation
    and is what match dedup keys on.
    """

    source: str
    target: str
    start_time: float
    duration: float
    local_id: int
    payload: str | None = None

    def __post_init__(self) -> None:
        if not math.isfinite(self.start_time):
            raise ValueError(f"edge start_time must be finite, got {self.start_time}")
        if not (math.isfinite(self.duration) and self.duration >= 0.0):
            raise ValueError(f"edge duration must be finite and >= 0, got {self.duration}")

    @property
    def end_time(self) -> float:
        return self.start_time + self.duration

    def format(self) -> str:
        return (
            f"{self.source},{self.target},"
            f"{format_seconds(self.start_time)},{format_seconds(self.duration)}"
        )


# Edge ids embed the allocating worker in the high bits so that ids stay
# unique cluster-wide even though each worker allocates independently.
_WORKER_BITS = 16
_SEQ_BITS = 64 - _WORKER_BITS
_SEQ_MASK = (1 << _SEQ_BITS) - 1


@dataclass
class EdgeIdAllocator:
    """Hands out cluster-unique edge ids for one ingesting worker."""

    worker_index: int = 0
    _next: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self) -> None:
        if not 0 <= self.worker_index < (1 << _WORKER_BITS):
            raise ValueError(f"worker_index out of range: {self.worker_index}")

    def allocate(self) -> int:
        with self._lock:
            seq = self._next
            self._next += 1
        if seq > _SEQ_MASK:
            raise OverflowError("edge id sequence exhausted")
        return (self.worker_index << _SEQ_BITS) | seq


def id_origin(local_id: int) -> int:
    """Worker index that allocated the given edge id."""
    return local_id >> _SEQ_BITS
