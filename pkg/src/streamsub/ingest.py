"""Netflow tuple parsing, synthetic stream generation, and stream sources.

Canonical CSV schema (one tuple per line, extra trailing fields allowed and
preserved):

    timeSeconds,durationSeconds,sourceIp,destIp,sourcePort,destPort,protocol[,...]

The edge view of a tuple is (sourceIp, destIp, timeSeconds, durationSeconds)
with the raw line carried as the opaque payload.
"""

from __future__ import annotations

import math
import random
import socket as socketlib
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field

from .edges import EdgeIdAllocator, TemporalEdge, format_seconds


class MalformedLine(ValueError):
    def __init__(self, field_index: int, field_name: str, reason: str) -> None:
        self.field_index = field_index
        self.field_name = field_name
        super().__init__(f"field {field_index} ({field_name}): {reason}")


_FIELDS = ("timeSeconds", "durationSeconds", "sourceIp", "destIp", "sourcePort", "destPort", "protocol")


@dataclass(frozen=True, slots=True)
class NetflowTuple:
    time_seconds: float
    duration_seconds: float
    source_ip: str
    dest_ip: str
    source_port: int
    dest_port: int
    protocol: str
    extras: tuple[str, ...] = ()

    def to_line(self) -> str:
        parts = [
            format_seconds(self.time_seconds),
            format_seconds(self.duration_seconds),
            self.source_ip,
            self.dest_ip,
            str(self.source_port),
            str(self.dest_port),
            self.protocol,
            *self.extras,
        ]
        return ",".join(parts)


def parse_netflow_line(line: str) -> NetflowTuple:
    parts = line.rstrip("\n").split(",")
    if len(parts) < len(_FIELDS):
        raise MalformedLine(len(parts), _FIELDS[min(len(parts), len(_FIELDS) - 1)], f"expected at least {len(_FIELDS)} comma-separated fields, got {len(parts)}")
    try:
        time_seconds = float(parts[0])
    except ValueError as exc:
        raise MalformedLine(0, _FIELDS[0], str(exc)) from exc
    if not math.isfinite(time_seconds):
        raise MalformedLine(0, _FIELDS[0], "time must be finite")
    try:
        duration = float(parts[1])
    except ValueError as exc:
        raise MalformedLine(1, _FIELDS[1], str(exc)) from exc
    if not (math.isfinite(duration) and duration >= 0.0):
        raise MalformedLine(1, _FIELDS[1], "duration must be finite and >= 0")
    if not parts[2]:
        raise MalformedLine(2, _FIELDS[2], "empty source")
    if not parts[3]:
        raise MalformedLine(3, _FIELDS[3], "empty target")
    try:
        source_port = int(parts[4])
    except ValueError as exc:
        raise MalformedLine(4, _FIELDS[4], str(exc)) from exc
    try:
        dest_port = int(parts[5])
    except ValueError as exc:
        raise MalformedLine(5, _FIELDS[5], str(exc)) from exc
    return NetflowTuple(
        time_seconds=time_seconds,
        duration_seconds=duration,
        source_ip=parts[2],
        dest_ip=parts[3],
        source_port=source_port,
        dest_port=dest_port,
        protocol=parts[6],
        extras=tuple(parts[7:]),
    )


def edge_from_netflow(nf: NetflowTuple, local_id: int, *, keep_payload: bool = True) -> TemporalEdge:
    return TemporalEdge(
        source=nf.source_ip,
        target=nf.dest_ip,
        start_time=nf.time_seconds,
        duration=nf.duration_seconds,
        local_id=local_id,
        payload=nf.to_line() if keep_payload else None,
    )


def read_netflow_file(path: str) -> Iterator[NetflowTuple]:
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                yield parse_netflow_line(line)


def edges_from(tuples: Iterable[NetflowTuple], allocator: EdgeIdAllocator, *, keep_payload: bool = False) -> Iterator[TemporalEdge]:
    for nf in tuples:
        yield edge_from_netflow(nf, allocator.allocate(), keep_payload=keep_payload)


@dataclass(frozen=True)
class GeneratorConfig:
    """Synthetic per-worker stream shape.

    Each worker draws source and destination uniformly from a shared pool of
    ``vertex_pool_size`` addresses, re-drawing self-loops, and spaces tuples
    ``1/rate_per_worker`` seconds apart.
    """

    vertex_pool_size: int
    edges_per_worker: int = 2_500_000
    rate_per_worker: float = 1000.0
    seed: int = 0
    worker_count: int = 1
    duration_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self) -> None:
        if self.vertex_pool_size < 2:
            raise ValueError("vertex_pool_size must be >= 2 (self-loops are re-drawn)")
        if self.edges_per_worker < 1 or self.worker_count < 1:
            raise ValueError("edges_per_worker and worker_count must be positive")
        if self.rate_per_worker <= 0:
            raise ValueError("rate_per_worker must be positive")
        lo, hi = self.duration_range
        if lo < 0 or hi < lo:
            raise ValueError(f"bad duration_range {self.duration_range}")


def vertex_name(index: int) -> str:
    return f"10.{(index >> 16) & 255}.{(index >> 8) & 255}.{index & 255}"


def generate(config: GeneratorConfig, worker_index: int) -> Iterator[NetflowTuple]:
    """Deterministic synthetic netflow stream for one worker."""
    if not 0 <= worker_index < config.worker_count:
        raise ValueError(f"worker_index {worker_index} out of range")
    rng = random.Random((config.seed << 16) ^ worker_index)
    pool = config.vertex_pool_size
    spacing = 1.0 / config.rate_per_worker
    dur_lo, dur_hi = config.duration_range
    for k in range(config.edges_per_worker):
        src = rng.randrange(pool)
        dst = rng.randrange(pool)
        while dst == src:
            dst = rng.randrange(pool)
        yield NetflowTuple(
            time_seconds=k * spacing,
            duration_seconds=rng.uniform(dur_lo, dur_hi),
            source_ip=vertex_name(src),
            dest_ip=vertex_name(dst),
            source_port=rng.randrange(1024, 65536),
            dest_port=rng.choice((80, 443, 22, 53, 8080)),
            protocol="TCP",
        )


def generate_edges(config: GeneratorConfig, worker_index: int) -> Iterator[TemporalEdge]:
    allocator = EdgeIdAllocator(worker_index)
    return edges_from(generate(config, worker_index), allocator)


def socket_lines(host: str, port: int, *, timeout: float | None = None) -> Iterator[NetflowTuple]:
    """Accept one connection on (host, port) and yield tuples until EOF."""
    listener = socketlib.socket(socketlib.AF_INET, socketlib.SOCK_STREAM)
    listener.setsockopt(socketlib.SOL_SOCKET, socketlib.SO_REUSEADDR, 1)
    listener.bind((host, port))
    listener.listen(1)
    if timeout is not None:
        listener.settimeout(timeout)
    try:
        conn, _ = listener.accept()
    finally:
        listener.close()
    if timeout is not None:
        conn.settimeout(timeout)
    buffer = b""
    try:
        while True:
            chunk = conn.recv(65536)
            if not chunk:
                break
            buffer += chunk
            while b"\n" in buffer:
                line, buffer = buffer.split(b"\n", 1)
                text = line.decode("utf-8", errors="replace").strip()
                if text:
                    yield parse_netflow_line(text)
        if buffer.strip():
            yield parse_netflow_line(buffer.decode("utf-8", errors="replace").strip())
    finally:
        conn.close()
