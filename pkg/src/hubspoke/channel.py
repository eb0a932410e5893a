"""Framed bidirectional channel between the hub and one spoke process.

Frame = u32 payload_length || kind (1 byte) || payload. Kinds:

    J  JSON control record (init, invoke, result, nested requests/replies)
    Q  ISC record expecting mediation (bit-exact wire bytes)
    R  ISC reply record (bit-exact wire bytes)
    E  ISC failure; payload is the reason code only, ASCII

The ISC records travel verbatim so operator-level validation sees exactly
the bytes the counterparty operator produced.
"""

from __future__ import annotations

import json
import socket
import struct

from .errors import SpokeCrashed, SpokeTimeout

KIND_JSON = b"J"
KIND_ISC_REQUEST = b"Q"
KIND_ISC_REPLY = b"R"
KIND_ISC_FAIL = b"E"


class Channel:
    def __init__(self, sock: socket.socket):
        self._sock = sock

    def fileno(self) -> int:
        return self._sock.fileno()

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass

    def send(self, kind: bytes, payload: bytes) -> None:
        frame = struct.pack(">I", len(payload)) + kind + payload
        try:
            self._sock.sendall(frame)
        except (BrokenPipeError, OSError) as exc:
            raise SpokeCrashed(str(exc))

    def send_json(self, obj: dict) -> None:
        self.send(KIND_JSON, json.dumps(obj, sort_keys=True).encode())

    def recv(self, timeout: float | None = None) -> tuple[bytes, bytes]:
        self._sock.settimeout(timeout)
        try:
            header = self._recv_exact(5)
            (length,) = struct.unpack(">I", header[:4])
            kind = header[4:5]
            payload = self._recv_exact(length)
        except socket.timeout:
            raise SpokeTimeout(f"no frame within {timeout}s")
        except (EOFError, ConnectionResetError, OSError) as exc:
            raise SpokeCrashed(str(exc))
        finally:
            self._sock.settimeout(None)
        return kind, payload

    def recv_json(self, timeout: float | None = None) -> dict:
        kind, payload = self.recv(timeout)
        if kind != KIND_JSON:
            raise SpokeCrashed(f"expected JSON frame, got {kind!r}")
        return json.loads(payload)

    def _recv_exact(self, n: int) -> bytes:
        buf = b""
        while len(buf) < n:
            chunk = self._sock.recv(n - len(buf))
            if not chunk:
                raise EOFError("channel closed")
            buf += chunk
        return buf


def channel_pair() -> tuple[Channel, socket.socket]:
    """(hub-side channel, raw child-side socket to pass to the spoke process)."""
    parent, child = socket.socketpair()
    return Channel(parent), child


def from_fd(fd: int) -> Channel:
    return Channel(socket.socket(fileno=fd))
