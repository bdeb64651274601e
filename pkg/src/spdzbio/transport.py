"""Two-party message channel.

Frame layout: ``[u32 LE payload byte length][u8 tag][payload]`` where the
payload is a sequence of 8-byte little-endian words. One ``send`` is one
flush, which is the unit the round counters measure.
"""

from __future__ import annotations

import enum
import queue
import socket
import struct
import threading
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import FramingError, TransportError

MAX_ELEMENTS = 2**24
_HEAD = struct.Struct("<IB")

_CLOSED = object()


class Tag(enum.IntEnum):
    EPSILON = 1
    DELTA = 2
    OPEN = 3
    INPUT_DIFF = 4
    SIGMA_COMMIT = 5
    SIGMA_REVEAL = 6
    CONTROL = 7


TUPLE_TAGS = frozenset({Tag.EPSILON, Tag.DELTA})


@dataclass(frozen=True, eq=False)
class Message:
    tag: Tag
    payload: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint64))
    # local annotation for instrumentation and fault injection; never on the wire
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "payload", np.ascontiguousarray(self.payload, dtype=np.uint64).ravel())


def encode_frame(msg: Message) -> bytes:
    n = msg.payload.size
    if n > MAX_ELEMENTS:
        raise FramingError(f"payload of {n} elements exceeds limit {MAX_ELEMENTS}")
    body = msg.payload.astype("<u8").tobytes()
    return _HEAD.pack(len(body), int(msg.tag)) + body


class FrameDecoder:
    """Incremental decoder: feed arbitrary byte chunks, collect whole messages."""

    def __init__(self):
        self._buf = bytearray()
        self._consumed = 0  # stream offset of _buf[0], for error reporting

    def feed(self, chunk: bytes) -> list[Message]:
        return [msg for _, msg in self.feed_frames(chunk)]

    def feed_frames(self, chunk: bytes) -> list[tuple[bytes, Message]]:
        self._buf += chunk
        out = []
        while len(self._buf) >= _HEAD.size:
            length, tag = _HEAD.unpack_from(self._buf, 0)
            if length % 8:
                raise FramingError(f"payload length {length} not a multiple of 8", self._consumed)
            if length // 8 > MAX_ELEMENTS:
                raise FramingError(f"oversize frame of {length} bytes", self._consumed)
            try:
                tag = Tag(tag)
            except ValueError:
                raise FramingError(f"unknown message tag {tag}", self._consumed + 4) from None
            end = _HEAD.size + length
            if len(self._buf) < end:
                break
            frame = bytes(self._buf[:end])
            payload = np.frombuffer(frame, dtype="<u8", offset=_HEAD.size).astype(np.uint64)
            out.append((frame, Message(tag, payload)))
            del self._buf[:end]
            self._consumed += end
        return out

    @property
    def pending(self) -> int:
        return len(self._buf)


def decode_frame(data: bytes) -> Message:
    dec = FrameDecoder()
    msgs = dec.feed(data)
    if len(msgs) != 1 or dec.pending:
        raise FramingError("expected exactly one complete frame", len(data) - dec.pending)
    return msgs[0]


@dataclass
class ChannelStats:
    rounds_sent: int = 0
    tuple_open_elements: int = 0
    aux_elements: int = 0
    bytes_on_wire: int = 0
    flushes_by_tag: dict = field(default_factory=dict)
    flushes_by_label: dict = field(default_factory=dict)

    def record(self, msg: Message, nbytes: int) -> None:
        self.rounds_sent += 1
        if msg.tag in TUPLE_TAGS:
            self.tuple_open_elements += msg.payload.size
        else:
            self.aux_elements += msg.payload.size
        self.bytes_on_wire += nbytes
        name = msg.tag.name.lower()
        self.flushes_by_tag[name] = self.flushes_by_tag.get(name, 0) + 1
        if msg.label:
            self.flushes_by_label[msg.label] = self.flushes_by_label.get(msg.label, 0) + 1

    def snapshot(self) -> "ChannelStats":
        return replace(self, flushes_by_tag=dict(self.flushes_by_tag), flushes_by_label=dict(self.flushes_by_label))


class Endpoint:
    """One party's end of a duplex channel."""

    def __init__(self, *, timeout: float | None = 60.0, record: bool = False):
        self.stats = ChannelStats()
        self.timeout = timeout
        self.transcript: list[tuple[str, bytes]] | None = [] if record else None
        self._inbox: queue.Queue = queue.Queue()
        self._closed = False

    def send(self, msg: Message) -> None:
        if self._closed:
            raise TransportError("endpoint is closed")
        frame = encode_frame(msg)
        self._write(frame)
        self.stats.record(msg, len(frame))
        if self.transcript is not None:
            self.transcript.append(("send", frame))

    def recv(self) -> Message:
        try:
            item = self._inbox.get(timeout=self.timeout)
        except queue.Empty:
            raise TransportError(f"no message from peer within {self.timeout}s") from None
        if item is _CLOSED:
            self._inbox.put(_CLOSED)
            raise TransportError("peer closed the channel")
        if isinstance(item, Exception):
            self._inbox.put(item)
            raise item
        frame, msg = item
        if self.transcript is not None:
            self.transcript.append(("recv", frame))
        return msg

    def close(self) -> None:
        self._closed = True

    def _write(self, frame: bytes) -> None:
        raise NotImplementedError

    def _deliver(self, frame: bytes, msg: Message) -> None:
        self._inbox.put((frame, msg))


class InMemoryEndpoint(Endpoint):
    peer: "InMemoryEndpoint"

    def _write(self, frame: bytes) -> None:
        if self.peer._closed:
            raise TransportError("peer closed the channel")
        self.peer._deliver(frame, decode_frame(frame))

    def close(self) -> None:
        if not self._closed:
            super().close()
            self.peer._inbox.put(_CLOSED)


def pair_in_memory(**kwargs) -> tuple[InMemoryEndpoint, InMemoryEndpoint]:
    a, b = InMemoryEndpoint(**kwargs), InMemoryEndpoint(**kwargs)
    a.peer, b.peer = b, a
    return a, b


class TcpEndpoint(Endpoint):
    """Socket-backed endpoint; a reader thread drains the socket so that
    both parties may send large batches simultaneously without deadlock."""

    def __init__(self, sock: socket.socket, **kwargs):
        super().__init__(**kwargs)
        self._sock = sock
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._send_lock = threading.Lock()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self) -> None:
        dec = FrameDecoder()
        try:
            while True:
                chunk = self._sock.recv(1 << 16)
                if not chunk:
                    break
                for frame, msg in dec.feed_frames(chunk):
                    self._deliver(frame, msg)
        except FramingError as exc:
            self._inbox.put(exc)
            return
        except OSError:
            pass
        self._inbox.put(_CLOSED)

    def _write(self, frame: bytes) -> None:
        try:
            with self._send_lock:
                self._sock.sendall(frame)
        except OSError as exc:
            raise TransportError(f"send failed: {exc}") from None

    def close(self) -> None:
        if not self._closed:
            super().close()
            try:
                self._sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self._sock.close()


def _split(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    return host or "127.0.0.1", int(port)


def connect_tcp(addr: str, *, connect_timeout: float = 10.0, **kwargs) -> TcpEndpoint:
    try:
        sock = socket.create_connection(_split(addr), timeout=connect_timeout)
    except OSError as exc:
        raise TransportError(f"cannot connect to {addr}: {exc}") from None
    sock.settimeout(None)
    return TcpEndpoint(sock, **kwargs)


class TcpListener:
    def __init__(self, addr: str):
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind(_split(addr))
        self._sock.listen(1)

    @property
    def address(self) -> str:
        host, port = self._sock.getsockname()[:2]
        return f"{host}:{port}"

    def accept(self, *, accept_timeout: float | None = 60.0, **kwargs) -> TcpEndpoint:
        self._sock.settimeout(accept_timeout)
        try:
            conn, _ = self._sock.accept()
        except OSError as exc:
            raise TransportError(f"no peer connected: {exc}") from None
        finally:
            self._sock.close()
        conn.settimeout(None)
        return TcpEndpoint(conn, **kwargs)


def listen_tcp(addr: str, **kwargs) -> TcpEndpoint:
    """Bind, wait for exactly one peer, return the connected endpoint."""
    return TcpListener(addr).accept(**kwargs)
