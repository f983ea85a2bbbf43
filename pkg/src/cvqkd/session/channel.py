"""Authenticated message channel over interchangeable byte transports.

A transport moves whole frames; the SecureChannel adds one-time-keyed
tags on send and verifies them on receive, keeping a transcript of
lengths and digests so tests can reconcile both ends byte for byte.
The loopback transport pairs two in-process endpoints through queues
and optionally routes frames through an intercept hook, which is how
tampering is injected in tests.  The TCP transport speaks the exact
same frame bytes over a socket.
"""

from __future__ import annotations

import hashlib
import queue
import socket
import struct
from dataclasses import dataclass, field
from typing import Callable, Optional

from ..crypto import MacKeySchedule, mac_tag, mac_verify
from ..errors import AuthenticationError, SessionAborted, TransportError
from .messages import MSG_ABORT, decode_abort, message_name

MAC_BYTES = 16
MAX_FRAME = 1 << 28


class LoopbackTransport:
    """One endpoint of an in-process frame pipe."""

    def __init__(self, outbox: queue.Queue, inbox: queue.Queue, label: str,
                 intercept: Optional[Callable[[str, bytes], bytes]] = None,
                 timeout: float = 60.0):
        self._outbox = outbox
        self._inbox = inbox
        self._label = label
        self._intercept = intercept
        self._timeout = timeout

    def send_frame(self, frame: bytes):
        if self._intercept is not None:
            frame = self._intercept(self._label, frame)
        self._outbox.put(frame)

    def recv_frame(self) -> bytes:
        try:
            return self._inbox.get(timeout=self._timeout)
        except queue.Empty:
            raise TransportError("peer sent nothing before the timeout") from None

    def close(self):
        pass


def loopback_pair(intercept: Optional[Callable[[str, bytes], bytes]] = None,
                  timeout: float = 60.0):
    """(endpoint for A, endpoint for B); intercept sees ("a->b"|"b->a", frame)."""
    a_to_b: queue.Queue = queue.Queue()
    b_to_a: queue.Queue = queue.Queue()
    end_a = LoopbackTransport(a_to_b, b_to_a, "a->b", intercept, timeout)
    end_b = LoopbackTransport(b_to_a, a_to_b, "b->a", intercept, timeout)
    return end_a, end_b


class TcpTransport:
    def __init__(self, sock: socket.socket, timeout: float = 60.0):
        self._sock = sock
        self._sock.settimeout(timeout)

    def send_frame(self, frame: bytes):
        try:
            self._sock.sendall(frame)
        except OSError as exc:
            raise TransportError(f"socket send failed: {exc}") from None

    def _read_exact(self, n: int) -> bytes:
        chunks = []
        remaining = n
        while remaining:
            try:
                chunk = self._sock.recv(min(remaining, 1 << 20))
            except OSError as exc:
                raise TransportError(f"socket read failed: {exc}") from None
            if not chunk:
                raise TransportError("peer closed the connection mid-frame")
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)

    def recv_frame(self) -> bytes:
        header = self._read_exact(4)
        (length,) = struct.unpack(">I", header)
        if not MAC_BYTES + 1 <= length <= MAX_FRAME:
            raise TransportError(f"frame length {length} out of bounds")
        return header + self._read_exact(length)

    def close(self):
        try:
            self._sock.close()
        except OSError:
            pass


@dataclass
class TranscriptEntry:
    direction: str          # "send" | "recv"
    msg_type: int
    payload_len: int
    frame_digest: str

    @property
    def name(self) -> str:
        return message_name(self.msg_type)


@dataclass
class Transcript:
    entries: list = field(default_factory=list)

    def record(self, direction: str, msg_type: int, frame: bytes):
        self.entries.append(TranscriptEntry(
            direction, msg_type, len(frame) - 5 - MAC_BYTES,
            hashlib.sha256(frame).hexdigest()))

    def sent(self):
        return [e for e in self.entries if e.direction == "send"]

    def received(self):
        return [e for e in self.entries if e.direction == "recv"]

    def bytes_sent(self) -> int:
        return sum(e.payload_len + 5 + MAC_BYTES for e in self.sent())

    def bytes_received(self) -> int:
        return sum(e.payload_len + 5 + MAC_BYTES for e in self.received())

    def summary(self) -> list:
        return [(e.direction, e.name, e.payload_len) for e in self.entries]


class SecureChannel:
    """Typed, authenticated messaging on top of a frame transport.

    Each direction consumes one-time keys from its own schedule; both
    parties must therefore send and receive in exactly the same order,
    which the protocol guarantees by construction.
    """

    def __init__(self, transport, shared_secret: bytes, role: str):
        if role not in ("A", "B"):
            raise ValueError("role must be 'A' or 'B'")
        self._transport = transport
        mine, theirs = ("a->b", "b->a") if role == "A" else ("b->a", "a->b")
        self._send_keys = MacKeySchedule(shared_secret, mine)
        self._recv_keys = MacKeySchedule(shared_secret, theirs)
        self.transcript = Transcript()

    def send(self, msg_type: int, payload: bytes):
        body = bytes([msg_type]) + payload
        tag = mac_tag(self._send_keys.next_key(), body)
        frame = struct.pack(">I", len(body) + MAC_BYTES) + body + tag
        self.transcript.record("send", msg_type, frame)
        self._transport.send_frame(frame)

    def recv(self):
        frame = self._transport.recv_frame()
        if len(frame) < 4 + 1 + MAC_BYTES:
            raise TransportError("frame shorter than the fixed overhead")
        (length,) = struct.unpack_from(">I", frame)
        if length != len(frame) - 4:
            raise TransportError("frame length field disagrees with the frame")
        body, tag = frame[4:-MAC_BYTES], frame[-MAC_BYTES:]
        if not mac_verify(self._recv_keys.next_key(), body, tag):
            raise AuthenticationError("message tag verification failed")
        self.transcript.record("recv", body[0], frame)
        return body[0], body[1:]

    def expect(self, *msg_types: int):
        """Receive one message of the given types; peer aborts propagate."""
        msg_type, payload = self.recv()
        if msg_type == MSG_ABORT:
            raise SessionAborted("peer_abort", decode_abort(payload))
        if msg_type not in msg_types:
            wanted = "/".join(message_name(t) for t in msg_types)
            raise SessionAborted(
                "protocol", f"got {message_name(msg_type)}, wanted {wanted}")
        return msg_type, payload

    def close(self):
        self._transport.close()
