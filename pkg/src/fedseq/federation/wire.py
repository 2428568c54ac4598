"""Binary framing for round messages and parameter sets.

Frame (all integers little-endian)::

    b"FSR1" | tag u8 | round u32 | id_len u16 | client_id utf-8
            | n_samples u64 | payload_len u64 | payload

Payload (a serialized ParameterSet)::

    count u32 | per entry: name_len u16 | name utf-8 | rank u8
                           | rank x dim u32 | float64 values (row-major)
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np

from ..params import ParameterSet

MAGIC = b"FSR1"
_HEAD = struct.Struct("<4sBIH")
_TAIL = struct.Struct("<QQ")
MAX_PAYLOAD = 1 << 34


class ProtocolError(Exception):
    """Malformed frame or a message that violates the round protocol."""


class Tag(enum.IntEnum):
    REGISTER = 1
    GLOBAL = 2
    UPDATE = 3
    DONE = 4


_HAS_PAYLOAD = {Tag.GLOBAL, Tag.UPDATE}
_HAS_CLIENT = {Tag.REGISTER, Tag.UPDATE}


def encode_params(params: ParameterSet) -> bytes:
    parts = [struct.pack("<I", len(params))]
    for name, arr in params:
        if not np.isfinite(arr).all():
            raise ProtocolError(f"refusing to serialize non-finite values in {name!r}")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


def decode_params(buf: bytes) -> ParameterSet:
    view = memoryview(buf)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise ProtocolError("truncated parameter payload")
        out = view[pos:pos + n]
        pos += n
        return out

    (count,) = struct.unpack("<I", take(4))
    entries = []
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2))
        try:
            name = bytes(take(nlen)).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ProtocolError("parameter name is not UTF-8") from exc
        (rank,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        n = int(np.prod(dims, dtype=np.int64)) if rank else 1
        arr = np.frombuffer(take(8 * n), dtype="<f8").astype(np.float64).reshape(dims)
        if not np.isfinite(arr).all():
            raise ProtocolError(f"non-finite values in {name!r}")
        entries.append((name, arr))
    if pos != len(view):
        raise ProtocolError("trailing bytes after parameter payload")
    try:
        return ParameterSet(entries)
    except ValueError as exc:
        raise ProtocolError(str(exc)) from exc


@dataclass(frozen=True, eq=False)
class RoundMessage:
    tag: Tag
    round: int = 0
    client_id: str = ""
    payload: ParameterSet | None = None
    n_samples: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tag", Tag(self.tag))
        if (self.payload is not None) != (self.tag in _HAS_PAYLOAD):
            raise ProtocolError(f"{self.tag.name} payload presence is wrong")
        if self.tag in _HAS_CLIENT and not self.client_id:
            raise ProtocolError(f"{self.tag.name} requires a client_id")
        if not 0 <= self.round < 2**32:
            raise ProtocolError("round out of range")
        if not 0 <= self.n_samples < 2**64:
            raise ProtocolError("n_samples out of range")

    def encode(self) -> bytes:
        cid = self.client_id.encode("utf-8")
        if len(cid) > 0xFFFF:
            raise ProtocolError("client_id too long")
        payload = encode_params(self.payload) if self.payload is not None else b""
        return b"".join([
            _HEAD.pack(MAGIC, int(self.tag), self.round, len(cid)), cid,
            _TAIL.pack(self.n_samples, len(payload)), payload,
        ])


def _parse_head(head: bytes):
    magic, tag, rnd, id_len = _HEAD.unpack(head)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    try:
        tag = Tag(tag)
    except ValueError:
        raise ProtocolError(f"unknown tag {tag}") from None
    return tag, rnd, id_len


def _build(tag, rnd, cid_raw, n_samples, payload) -> RoundMessage:
    try:
        cid = bytes(cid_raw).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ProtocolError("client_id is not UTF-8") from exc
    params = decode_params(payload) if payload else None
    if tag in _HAS_PAYLOAD and params is None:
        raise ProtocolError(f"{tag.name} without payload")
    return RoundMessage(tag, rnd, cid, params, n_samples)


def decode_message(buf: bytes) -> RoundMessage:
    if len(buf) < _HEAD.size:
        raise ProtocolError("truncated frame header")
    tag, rnd, id_len = _parse_head(buf[:_HEAD.size])
    pos = _HEAD.size
    cid = buf[pos:pos + id_len]
    pos += id_len
    if len(buf) < pos + _TAIL.size:
        raise ProtocolError("truncated frame")
    n_samples, plen = _TAIL.unpack(buf[pos:pos + _TAIL.size])
    pos += _TAIL.size
    if len(buf) != pos + plen:
        raise ProtocolError("frame length does not match payload length")
    return _build(tag, rnd, cid, n_samples, buf[pos:])


def _recv_exact(sock, n: int) -> bytes:
    chunks, got = [], 0
    while got < n:
        chunk = sock.recv(min(n - got, 1 << 20))
        if not chunk:
            raise EOFError("connection closed")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def read_message(sock) -> RoundMessage:
    """Read exactly one frame from a stream socket."""
    head = _recv_exact(sock, _HEAD.size)
    tag, rnd, id_len = _parse_head(head)
    cid = _recv_exact(sock, id_len)
    n_samples, plen = _TAIL.unpack(_recv_exact(sock, _TAIL.size))
    if plen > MAX_PAYLOAD:
        raise ProtocolError(f"payload of {plen} bytes exceeds limit")
    payload = _recv_exact(sock, plen) if plen else b""
    return _build(tag, rnd, cid, n_samples, payload)


def write_message(sock, msg: RoundMessage) -> None:
    sock.sendall(msg.encode())
