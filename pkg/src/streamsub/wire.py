"""Binary frames for edges and edge requests.

Each frame begins with a one-byte type tag; strings are UTF-8 with a u16
length prefix.  The socket transport additionally length-prefixes whole
frames; the in-process transports pass frames as-is.
"""

from __future__ import annotations

import struct

from .edges import TemporalEdge
from .requests import EdgeRequest

TAG_EDGE = 0x01
TAG_REQUEST = 0x02


class WireError(Exception):
    pass


def _pack_str(value: str | None) -> bytes:
    if value is None:
        return struct.pack(">H", 0xFFFF)
    data = value.encode("utf-8")
    if len(data) >= 0xFFFF:
        raise WireError(f"string too long for frame: {len(data)} bytes")
    return struct.pack(">H", len(data)) + data


def _unpack_str(buf: bytes, offset: int) -> tuple[str | None, int]:
    (length,) = struct.unpack_from(">H", buf, offset)
    offset += 2
    if length == 0xFFFF:
        return None, offset
    value = buf[offset : offset + length].decode("utf-8")
    if len(buf) < offset + length:
        raise WireError("truncated string field")
    return value, offset + length


def encode_edge(edge: TemporalEdge) -> bytes:
    parts = [
        bytes((TAG_EDGE,)),
        struct.pack(">Qdd", edge.local_id, edge.start_time, edge.duration),
        _pack_str(edge.source),
        _pack_str(edge.target),
        _pack_str(edge.payload),
    ]
    return b"".join(parts)


def encode_request(request: EdgeRequest) -> bytes:
    parts = [
        bytes((TAG_REQUEST,)),
        struct.pack(">ddIH", request.lo, request.hi, request.requesting_worker, request.step_index),
        _pack_str(request.bound_source),
        _pack_str(request.bound_target),
        _pack_str(request.query_id),
    ]
    return b"".join(parts)


def decode_message(buf: bytes) -> TemporalEdge | EdgeRequest:
    if not buf:
        raise WireError("empty frame")
    tag = buf[0]
    try:
        if tag == TAG_EDGE:
            local_id, start, duration = struct.unpack_from(">Qdd", buf, 1)
            offset = 1 + struct.calcsize(">Qdd")
            source, offset = _unpack_str(buf, offset)
            target, offset = _unpack_str(buf, offset)
            payload, offset = _unpack_str(buf, offset)
            if source is None or target is None:
                raise WireError("edge frame missing endpoints")
            return TemporalEdge(
                source=source,
                target=target,
                start_time=start,
                duration=duration,
                local_id=local_id,
                payload=payload,
            )
        if tag == TAG_REQUEST:
            lo, hi, worker, step = struct.unpack_from(">ddIH", buf, 1)
            offset = 1 + struct.calcsize(">ddIH")
            source, offset = _unpack_str(buf, offset)
            target, offset = _unpack_str(buf, offset)
            query_id, offset = _unpack_str(buf, offset)
            return EdgeRequest(
                bound_source=source,
                bound_target=target,
                lo=lo,
                hi=hi,
                requesting_worker=worker,
                query_id=query_id or "",
                step_index=step,
            )
    except WireError:
        raise
    except (struct.error, UnicodeDecodeError, ValueError) as exc:
        raise WireError(f"malformed frame: {exc}") from exc
    raise WireError(f"unknown frame tag 0x{tag:02x}")
