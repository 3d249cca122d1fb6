"""Admission-control stub: wire protocol, server, client, and switch stub.

Wire protocol (documented bit-exactly, see README): each message is a
4-byte big-endian unsigned length N followed by N bytes of UTF-8 JSON,
serialized with sorted keys and compact separators. Message types:

    {"descriptor": {"interval_s": ..., "max_frame_size": ..., "max_frames": ...},
     "qos": {"max_latency_s": ..., "paths": ..., "rank": ...},
     "stream": {"dst": ..., "dport": ..., "proto": ..., "sport": ..., "src": ...},
     "type": "announce"}

    {"pcp": 0-7, "type": "admit", "vlan_id": 1-4094}

    {"reason": "...", "type": "deny"}

The server here is a test/dev stand-in for a real central network
controller; the simulator couples through InProcessCnc instead so its
event loop stays deterministic.
"""

from __future__ import annotations

import json
import socket
import socketserver
import struct
import threading
import time
from dataclasses import dataclass

from .descriptor import TrafficDescriptor
from .errors import ParameterError, ProtocolError
from .qosmap import QosRequirements, StreamRank

__all__ = [
    "TalkerAnnouncement",
    "CncResponse",
    "encode_message",
    "read_message",
    "CncClient",
    "CncStubServer",
    "InProcessCnc",
    "SwitchConfigStub",
    "RetryPolicy",
]

_MAX_MESSAGE = 1 << 20


@dataclass(frozen=True)
class TalkerAnnouncement:
    stream: "StreamKeyLike"
    descriptor: TrafficDescriptor
    qos: QosRequirements

    def to_message(self) -> dict:
        k = self.stream
        return {
            "type": "announce",
            "stream": {
                "src": k.src_ip, "dst": k.dst_ip, "proto": k.protocol,
                "sport": k.src_port, "dport": k.dst_port,
            },
            "descriptor": self.descriptor.to_dict(),
            "qos": self.qos.to_dict(),
        }


@dataclass(frozen=True)
class CncResponse:
    admitted: bool
    vlan_id: int | None = None
    pcp: int | None = None
    reason: str = ""

    def __post_init__(self):
        if self.admitted:
            if self.vlan_id is None or not (1 <= self.vlan_id <= 4094):
                raise ParameterError(f"VLAN ID out of range: {self.vlan_id}")
            if self.pcp is None or not (0 <= self.pcp <= 7):
                raise ParameterError(f"PCP out of range: {self.pcp}")

    @classmethod
    def admit(cls, vlan_id: int, pcp: int) -> "CncResponse":
        return cls(True, vlan_id, pcp)

    @classmethod
    def deny(cls, reason: str) -> "CncResponse":
        return cls(False, reason=reason)


class StreamKeyLike:
    """Anything with src_ip, dst_ip, protocol, src_port, dst_port attributes."""


def encode_message(msg: dict) -> bytes:
    body = json.dumps(msg, sort_keys=True, separators=(",", ":")).encode("utf-8")
    if len(body) > _MAX_MESSAGE:
        raise ProtocolError("message too large")
    return struct.pack(">I", len(body)) + body


def _recv_exact(sock: socket.socket, count: int) -> bytes:
    chunks = []
    while count:
        chunk = sock.recv(count)
        if not chunk:
            raise ProtocolError("connection closed mid-message")
        chunks.append(chunk)
        count -= len(chunk)
    return b"".join(chunks)


def read_message(sock: socket.socket) -> dict:
    header = _recv_exact(sock, 4)
    (length,) = struct.unpack(">I", header)
    if length == 0 or length > _MAX_MESSAGE:
        raise ProtocolError(f"bad message length {length}")
    body = _recv_exact(sock, length)
    try:
        msg = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"malformed JSON payload: {exc}") from exc
    if not isinstance(msg, dict) or "type" not in msg:
        raise ProtocolError("message must be an object with a 'type' field")
    return msg


def parse_response(msg: dict) -> CncResponse:
    if msg.get("type") == "admit":
        try:
            return CncResponse.admit(int(msg["vlan_id"]), int(msg["pcp"]))
        except (KeyError, TypeError, ValueError, ParameterError) as exc:
            raise ProtocolError(f"malformed admit response: {exc}") from exc
    if msg.get("type") == "deny":
        return CncResponse.deny(str(msg.get("reason", "")))
    raise ProtocolError(f"unexpected response type {msg.get('type')!r}")


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 3
    base_delay_s: float = 0.1
    timeout_s: float = 2.0

    def delays(self):
        for i in range(self.attempts):
            yield self.base_delay_s * (2 ** i)


class CncClient:
    """Announce over the stub wire protocol with timeout and retries.

    Timeouts and connection failures are retried with exponential
    backoff and finally reported as a denial; a malformed response
    raises ProtocolError so the caller can leave the stream eligible for
    a later retry.
    """

    def __init__(self, host: str, port: int, retry: RetryPolicy | None = None):
        self.host = host
        self.port = port
        self.retry = retry or RetryPolicy()

    def announce(self, announcement: TalkerAnnouncement) -> CncResponse:
        payload = encode_message(announcement.to_message())
        last_error = "no attempt made"
        for delay in self.retry.delays():
            try:
                with socket.create_connection((self.host, self.port),
                                              timeout=self.retry.timeout_s) as sock:
                    sock.sendall(payload)
                    return parse_response(read_message(sock))
            except (OSError, TimeoutError) as exc:
                last_error = str(exc) or type(exc).__name__
                time.sleep(delay)
        return CncResponse.deny(f"announcement failed after {self.retry.attempts} attempts: {last_error}")


class CncStubServer:
    """Threaded TCP stub answering every announcement with a fixed policy."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0,
                 admit: bool = True, vlan_id: int = 100, pcp: int = 5,
                 deny_reason: str = "denied by policy"):
        outer = self

        class Handler(socketserver.BaseRequestHandler):
            def handle(self):
                try:
                    msg = read_message(self.request)
                except ProtocolError:
                    return
                if msg.get("type") != "announce":
                    return
                outer.announcements.append(msg)
                if outer.admit:
                    reply = {"type": "admit", "vlan_id": outer.vlan_id, "pcp": outer.pcp}
                else:
                    reply = {"type": "deny", "reason": outer.deny_reason}
                self.request.sendall(encode_message(reply))

        self.admit = admit
        self.vlan_id = vlan_id
        self.pcp = pcp
        self.deny_reason = deny_reason
        self.announcements: list[dict] = []
        self._server = socketserver.ThreadingTCPServer((host, port), Handler)
        self._server.daemon_threads = True
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address

    def __enter__(self) -> "CncStubServer":
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self._server.shutdown()
        self._server.server_close()


class InProcessCnc:
    """Direct-call admission stub for deterministic in-simulation coupling."""

    def __init__(self, admit: bool = True, vlan_id: int = 100, pcp: int = 5,
                 deny_reason: str = "denied by policy"):
        self._admit = admit
        self.vlan_id = vlan_id
        self.pcp = pcp
        self.deny_reason = deny_reason
        self.announcements: list[TalkerAnnouncement] = []

    def announce(self, announcement: TalkerAnnouncement) -> CncResponse:
        self.announcements.append(announcement)
        if self._admit:
            return CncResponse.admit(self.vlan_id, self.pcp)
        return CncResponse.deny(self.deny_reason)


class SwitchConfigStub:
    """Records per-stream identification rules; idempotent per stream key."""

    def __init__(self, ack: bool = True):
        self._ack = ack
        self.rules: dict = {}

    def install_rule(self, key, vlan_id: int, pcp: int) -> bool:
        if not self._ack:
            return False
        self.rules[key] = {"vlan_id": vlan_id, "pcp": pcp}
        return True
