"""Push/pull messaging between workers.

A worker owns one communicator per message kind (edges, requests).  Sends
pick one of several logical channels to the destination uniformly at random;
delivery invokes the registered callback.  Three transports are provided:

* ``DeterministicBus`` - in-process FIFO; ``drain`` delivers everything
  in-line in send order, so multi-worker runs are exactly reproducible.
* ``DelayedBus`` - in-process with a virtual clock; each message is assigned
  a seeded random latency (and optionally dropped), so late-arrival loss is
  reproducible at desk scale.
* ``SocketTransport`` - TCP with length-prefixed frames and real pull
  threads, for genuine multi-host runs.
"""

from __future__ import annotations

import heapq
import random
import socket
import struct
import threading
from collections import deque
from collections.abc import Callable


class CommsError(Exception):
    pass


class SendToSelf(CommsError):
    pass


class UnknownPeer(CommsError):
    pass


class NotStarted(CommsError):
    pass


class AlreadyStarted(CommsError):
    pass


class DeterministicBus:
    """Shared in-process transport with strict FIFO delivery on drain."""

    def __init__(self) -> None:
        self._queue: deque[tuple[int, bytes]] = deque()
        self._lock = threading.Lock()
        self._deliver: dict[int, Callable[[bytes], None]] = {}
        self.delivered = 0

    def attach(self, worker_id: int, deliver: Callable[[bytes], None]) -> None:
        self._deliver[worker_id] = deliver

    def submit(self, src: int, dest: int, channel: int, payload: bytes) -> None:
        with self._lock:
            self._queue.append((dest, payload))

    @property
    def pending(self) -> int:
        return len(self._queue)

    def drain(self) -> None:
        while True:
            with self._lock:
                if not self._queue:
                    return
                dest, payload = self._queue.popleft()
            self._deliver[dest](payload)
            self.delivered += 1

    def start_worker(self, worker_id: int) -> None:
        pass

    def stop_worker(self, worker_id: int) -> None:
        pass


class DelayedBus:
    """In-process transport on a virtual clock with random latency and loss.

    The driver advances the clock as stream time progresses; a message sent
    at virtual time t is delivered when the clock passes t + latency, with
    latency drawn uniformly from [0, max_latency].  Fixed seeds make runs
    reproducible.
    """

    def __init__(self, *, seed: int = 0, max_latency: float = 0.0, drop_probability: float = 0.0) -> None:
        if not 0.0 <= drop_probability <= 1.0:
            raise ValueError(f"drop_probability must be in [0, 1], got {drop_probability}")
        if max_latency < 0.0:
            raise ValueError(f"max_latency must be >= 0, got {max_latency}")
        self.max_latency = max_latency
        self.drop_probability = drop_probability
        self._rng = random.Random(seed)
        self._heap: list[tuple[float, int, int, bytes]] = []
        self._seq = 0
        self._lock = threading.Lock()
        self._deliver: dict[int, Callable[[bytes], None]] = {}
        self.now = 0.0
        self.delivered = 0
        self.dropped = 0

    def attach(self, worker_id: int, deliver: Callable[[bytes], None]) -> None:
        self._deliver[worker_id] = deliver

    def submit(self, src: int, dest: int, channel: int, payload: bytes) -> None:
        with self._lock:
            if self.drop_probability and self._rng.random() < self.drop_probability:
                self.dropped += 1
                return
            latency = self._rng.uniform(0.0, self.max_latency) if self.max_latency else 0.0
            heapq.heappush(self._heap, (self.now + latency, self._seq, dest, payload))
            self._seq += 1

    @property
    def pending(self) -> int:
        return len(self._heap)

    def advance_to(self, t: float) -> None:
        """Deliver every message due at or before virtual time ``t``."""
        while True:
            with self._lock:
                if not self._heap or self._heap[0][0] > t:
                    if t > self.now:
                        self.now = t
                    return
                due, _, dest, payload = heapq.heappop(self._heap)
                if due > self.now:
                    self.now = due
            self._deliver[dest](payload)
            self.delivered += 1

    def drain(self) -> None:
        """Deliver everything still in flight, advancing the clock as needed."""
        while True:
            with self._lock:
                if not self._heap:
                    return
                due, _, dest, payload = heapq.heappop(self._heap)
                if due > self.now:
                    self.now = due
            self._deliver[dest](payload)
            self.delivered += 1

    def start_worker(self, worker_id: int) -> None:
        pass

    def stop_worker(self, worker_id: int) -> None:
        pass


class SocketTransport:
    """TCP transport for one worker: framed messages, sender queues, pull threads.

    ``addresses`` maps worker id to (host, port).  Frames are u32
    length-prefixed.  Sends never block the caller: each (peer, channel)
    connection has its own queue and sender thread.
    """

    def __init__(self, worker_id: int, addresses: dict[int, tuple[str, int]]) -> None:
        self.worker_id = worker_id
        self.addresses = dict(addresses)
        self._deliver: Callable[[bytes], None] | None = None
        self._listener: socket.socket | None = None
        self._threads: list[threading.Thread] = []
        self._senders: dict[tuple[int, int], tuple[deque, threading.Event]] = {}
        self._running = False
        self.delivered = 0

    def attach(self, worker_id: int, deliver: Callable[[bytes], None]) -> None:
        if worker_id == self.worker_id:
            self._deliver = deliver

    @property
    def pending(self) -> int:
        return sum(len(q) for q, _ in self._senders.values())

    def drain(self) -> None:
        raise CommsError("drain is only supported on in-process transports")

    def start_worker(self, worker_id: int) -> None:
        if worker_id != self.worker_id:
            return
        host, port = self.addresses[self.worker_id]
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((host, port))
        listener.listen(64)
        self._listener = listener
        self._running = True
        accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        accept_thread.start()
        self._threads.append(accept_thread)

    def _accept_loop(self) -> None:
        assert self._listener is not None
        while self._running:
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            reader = threading.Thread(target=self._read_loop, args=(conn,), daemon=True)
            reader.start()
            self._threads.append(reader)

    def _read_loop(self, conn: socket.socket) -> None:
        try:
            while self._running:
                header = self._read_exact(conn, 4)
                if header is None:
                    return
                (length,) = struct.unpack(">I", header)
                frame = self._read_exact(conn, length)
                if frame is None:
                    return
                if self._deliver is not None:
                    self._deliver(frame)
                    self.delivered += 1
        finally:
            conn.close()

    @staticmethod
    def _read_exact(conn: socket.socket, count: int) -> bytes | None:
        chunks = []
        remaining = count
        while remaining:
            chunk = conn.recv(remaining)
            if not chunk:
                return None
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)

    def submit(self, src: int, dest: int, channel: int, payload: bytes) -> None:
        key = (dest, channel)
        entry = self._senders.get(key)
        if entry is None:
            queue: deque = deque()
            wake = threading.Event()
            entry = self._senders.setdefault(key, (queue, wake))
            if entry[0] is queue:
                sender = threading.Thread(target=self._send_loop, args=(dest, queue, wake), daemon=True)
                sender.start()
                self._threads.append(sender)
        entry[0].append(payload)
        entry[1].set()

    def _send_loop(self, dest: int, queue: deque, wake: threading.Event) -> None:
        host, port = self.addresses[dest]
        conn: socket.socket | None = None
        while self._running or queue:
            if not queue:
                wake.wait(timeout=0.1)
                wake.clear()
                continue
            payload = queue.popleft()
            try:
                if conn is None:
                    conn = socket.create_connection((host, port), timeout=5.0)
                conn.sendall(struct.pack(">I", len(payload)) + payload)
            except OSError:
                if conn is not None:
                    conn.close()
                    conn = None
        if conn is not None:
            conn.close()

    def stop_worker(self, worker_id: int) -> None:
        if worker_id != self.worker_id:
            return
        self._running = False
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass


def parse_peer_file(text: str) -> dict[int, tuple[str, int]]:
    """Parse ``workerId host:port`` lines into an address map."""
    addresses: dict[int, tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            worker_part, addr = line.split()
            host, port = addr.rsplit(":", 1)
            addresses[int(worker_part)] = (host, int(port))
        except ValueError as exc:
            raise ValueError(f"bad peer line {lineno}: {raw!r}") from exc
    return addresses


class Communicator:
    """Messaging endpoint for one worker over a shared transport."""

    def __init__(
        self,
        worker_id: int,
        peers: list[int],
        transport,
        *,
        push_channels_per_peer: int = 4,
        pull_worker_count: int = 16,
        seed: int = 0,
    ) -> None:
        if push_channels_per_peer < 1:
            raise ValueError("push_channels_per_peer must be >= 1")
        if pull_worker_count < 1:
            raise ValueError("pull_worker_count must be >= 1")
        self.worker_id = worker_id
        self.peers = [p for p in peers if p != worker_id]
        self.transport = transport
        self.push_channels_per_peer = push_channels_per_peer
        self.pull_worker_count = pull_worker_count
        self._rng = random.Random((seed << 20) ^ worker_id)
        self._callback: Callable[[bytes], None] | None = None
        self._started = False
        self._ever_started = False
        self.sent = 0
        self.received = 0
        self.channel_counts: dict[int, list[int]] = {
            p: [0] * push_channels_per_peer for p in self.peers
        }
        transport.attach(worker_id, self._on_message)

    def register_callback(self, callback: Callable[[bytes], None]) -> None:
        self._callback = callback

    def _on_message(self, payload: bytes) -> None:
        self.received += 1
        if self._callback is not None:
            self._callback(payload)

    def start(self) -> None:
        if self._started:
            raise AlreadyStarted(f"communicator for worker {self.worker_id} already started")
        if self._callback is None:
            raise NotStarted("register a callback before starting")
        self._started = True
        self._ever_started = True
        self.transport.start_worker(self.worker_id)

    def stop(self) -> None:
        """Idempotent once started; stopping a never-started communicator is an error."""
        if not self._ever_started:
            raise NotStarted("communicator was never started")
        if self._started:
            self.transport.stop_worker(self.worker_id)
        self._started = False

    def drain(self) -> None:
        if not self._started:
            raise NotStarted("communicator not started")
        self.transport.drain()

    def send(self, destination: int, payload: bytes) -> None:
        if not self._started:
            raise NotStarted("communicator not started")
        if destination == self.worker_id:
            raise SendToSelf(f"worker {self.worker_id} cannot send to itself")
        if destination not in self.channel_counts:
            raise UnknownPeer(f"worker {destination} is not a peer of {self.worker_id}")
        channel = self._rng.randrange(self.push_channels_per_peer)
        self.channel_counts[destination][channel] += 1
        self.sent += 1
        self.transport.submit(self.worker_id, destination, channel, payload)
