"""Length-framed binary messages exchanged between sites and the aggregator.

Frame::

    magic  "FFL1"        4 bytes
    version              u8 (= 1)
    msg type             u8 (1 Register, 2 GlobalBackbone, 3 LocalBackbone,
                             4 EnterFineTune, 5 Shutdown)
    payload length       u32 LE
    payload

All integers are little-endian. Strings are a u16 byte length followed by
UTF-8. A parameter set is a u32 tensor count, then per tensor: name string,
u8 ndim, ndim x u32 dims, and the data as row-major f64.

Payloads::

    Register         site_id, n_train u32
    GlobalBackbone   round u32, parameter set
    LocalBackbone    round u32, site_id, n_train u32, train_loss f64, parameter set
    EnterFineTune    (empty)
    Shutdown         (empty)
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from ..nn.layers import Parameters

MAGIC = b"FFL1"
VERSION = 1
HEADER = struct.Struct("<4sBBI")
HEADER_SIZE = HEADER.size

REGISTER, GLOBAL_BACKBONE, LOCAL_BACKBONE, ENTER_FINE_TUNE, SHUTDOWN = 1, 2, 3, 4, 5


class ProtocolError(ValueError):
    pass


class BadMagicError(ProtocolError):
    pass


class BadVersionError(ProtocolError):
    pass


class TruncatedFrameError(ProtocolError):
    pass


class UnknownMessageTypeError(ProtocolError):
    pass


class MalformedPayloadError(ProtocolError):
    """Payload bytes that parse but are inconsistent (trailing data, bad UTF-8, ...)."""


def params_equal(a: Parameters, b: Parameters) -> bool:
    if list(a) != list(b):
        return False
    return all(
        a[k].shape == b[k].shape and np.asarray(a[k], "<f8").tobytes() == np.asarray(b[k], "<f8").tobytes()
        for k in a
    )


@dataclass(frozen=True)
class Register:
    site_id: str
    n_train: int


@dataclass(frozen=True, eq=False)
class GlobalBackbone:
    round: int
    params: Parameters = field(repr=False)

    def __eq__(self, other):
        return (
            isinstance(other, GlobalBackbone)
            and self.round == other.round
            and params_equal(self.params, other.params)
        )


@dataclass(frozen=True, eq=False)
class LocalBackbone:
    round: int
    site_id: str
    params: Parameters = field(repr=False)
    n_train: int
    train_loss: float = math.nan

    def __eq__(self, other):
        return (
            isinstance(other, LocalBackbone)
            and (self.round, self.site_id, self.n_train) == (other.round, other.site_id, other.n_train)
            and struct.pack("<d", self.train_loss) == struct.pack("<d", other.train_loss)
            and params_equal(self.params, other.params)
        )


@dataclass(frozen=True)
class EnterFineTune:
    pass


@dataclass(frozen=True)
class Shutdown:
    pass


RoundMessage = Union[Register, GlobalBackbone, LocalBackbone, EnterFineTune, Shutdown]

_TAGS = {
    Register: REGISTER,
    GlobalBackbone: GLOBAL_BACKBONE,
    LocalBackbone: LOCAL_BACKBONE,
    EnterFineTune: ENTER_FINE_TUNE,
    Shutdown: SHUTDOWN,
}


# --- encoding -------------------------------------------------------------------------


def _u32(v: int) -> bytes:
    if not 0 <= v < 2**32:
        raise ValueError(f"{v} does not fit in u32")
    return struct.pack("<I", v)


def _str(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) >= 2**16:
        raise ValueError("string too long for the wire format")
    return struct.pack("<H", len(raw)) + raw


def _params(params: Parameters) -> bytes:
    parts = [_u32(len(params))]
    for name, value in params.items():
        arr = np.asarray(value, dtype="<f8")
        if arr.ndim > 255:
            raise ValueError(f"{name}: too many dimensions")
        parts.append(_str(name))
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(b"".join(_u32(d) for d in arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(parts)


def encode_payload(m: RoundMessage) -> bytes:
    if isinstance(m, Register):
        return _str(m.site_id) + _u32(m.n_train)
    if isinstance(m, GlobalBackbone):
        return _u32(m.round) + _params(m.params)
    if isinstance(m, LocalBackbone):
        return (
            _u32(m.round)
            + _str(m.site_id)
            + _u32(m.n_train)
            + struct.pack("<d", m.train_loss)
            + _params(m.params)
        )
    if isinstance(m, (EnterFineTune, Shutdown)):
        return b""
    raise TypeError(f"not a round message: {m!r}")


def encode_message(m: RoundMessage) -> bytes:
    payload = encode_payload(m)
    return HEADER.pack(MAGIC, VERSION, _TAGS[type(m)], len(payload)) + payload


# --- decoding -------------------------------------------------------------------------


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = memoryview(buf)
        self.pos = 0

    def take(self, n: int) -> memoryview:
        if self.pos + n > len(self.buf):
            raise TruncatedFrameError(
                f"payload needs {self.pos + n} bytes, only {len(self.buf)} present"
            )
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def string(self) -> str:
        raw = bytes(self.take(self.u16()))
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedPayloadError(f"invalid UTF-8 string: {exc}") from None

    def params(self) -> Parameters:
        out: Parameters = {}
        for _ in range(self.u32()):
            name = self.string()
            ndim = self.u8()
            shape = tuple(self.u32() for _ in range(ndim))
            count = int(np.prod(shape, dtype=np.int64))
            data = self.take(8 * count)
            if name in out:
                raise MalformedPayloadError(f"duplicate tensor name {name!r}")
            out[name] = np.frombuffer(data, dtype="<f8").astype(np.float64).reshape(shape)
        return out

    def done(self):
        if self.pos != len(self.buf):
            raise MalformedPayloadError(f"{len(self.buf) - self.pos} trailing payload bytes")


def decode_header(header: bytes):
    """Validate a frame header; returns ``(msg_type, payload_length)``."""
    if len(header) < 4 or bytes(header[:4]) != MAGIC:
        raise BadMagicError(f"bad magic {bytes(header[:4])!r}")
    if len(header) < HEADER_SIZE:
        raise TruncatedFrameError(f"frame header needs {HEADER_SIZE} bytes, got {len(header)}")
    _, version, tag, length = HEADER.unpack(bytes(header[:HEADER_SIZE]))
    if version != VERSION:
        raise BadVersionError(f"unsupported protocol version {version}")
    if tag not in _TAGS.values():
        raise UnknownMessageTypeError(f"unknown message type {tag}")
    return tag, length


def decode_payload(tag: int, payload: bytes) -> RoundMessage:
    r = _Reader(payload)
    if tag == REGISTER:
        m = Register(r.string(), r.u32())
    elif tag == GLOBAL_BACKBONE:
        m = GlobalBackbone(r.u32(), r.params())
    elif tag == LOCAL_BACKBONE:
        rnd, sid, n, loss = r.u32(), r.string(), r.u32(), r.f64()
        m = LocalBackbone(rnd, sid, r.params(), n, loss)
    elif tag == ENTER_FINE_TUNE:
        m = EnterFineTune()
    elif tag == SHUTDOWN:
        m = Shutdown()
    else:
        raise UnknownMessageTypeError(f"unknown message type {tag}")
    r.done()
    return m


def decode_message(frame: bytes) -> RoundMessage:
    tag, length = decode_header(frame)
    body = frame[HEADER_SIZE:]
    if len(body) < length:
        raise TruncatedFrameError(f"payload length {length}, only {len(body)} bytes present")
    if len(body) > length:
        raise MalformedPayloadError(f"{len(body) - length} bytes after the frame")
    return decode_payload(tag, body)


# --- sockets ---------------------------------------------------------------------------


class ConnectionClosed(ConnectionError):
    pass


def _recv_exact(sock, n: int) -> bytes:
    chunks = []
    got = 0
    while got < n:
        chunk = sock.recv(min(n - got, 1 << 20))
        if not chunk:
            if got == 0:
                raise ConnectionClosed("peer closed the connection")
            raise TruncatedFrameError(f"connection closed after {got} of {n} bytes")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def send_message(sock, m: RoundMessage) -> None:
    sock.sendall(encode_message(m))


def recv_message(sock) -> RoundMessage:
    header = _recv_exact(sock, HEADER_SIZE)
    tag, length = decode_header(header)
    try:
        payload = _recv_exact(sock, length) if length else b""
    except ConnectionClosed:
        raise TruncatedFrameError("connection closed before the payload") from None
    return decode_payload(tag, payload)
