"""Vertex-ownership hash partitioning.

Every vertex id has exactly one owning worker for the lifetime of a run;
an edge is delivered to the owner of its source and the owner of its target
(once when those coincide).
"""

from __future__ import annotations

from collections.abc import Callable

from .edges import TemporalEdge
from .hashing import resolve_hash


class Partitioner:
    def __init__(self, worker_count: int, hash_function: str | Callable[[str], int] = "IpHashFunction") -> None:
        if worker_count < 1:
            raise ValueError(f"worker_count must be >= 1, got {worker_count}")
        self.worker_count = worker_count
        self.hash_function = resolve_hash(hash_function) if isinstance(hash_function, str) else hash_function

    def owner(self, vertex: str) -> int:
        return self.hash_function(vertex) % self.worker_count

    def route(self, edge: TemporalEdge) -> set[int]:
        return {self.owner(edge.source), self.owner(edge.target)}
