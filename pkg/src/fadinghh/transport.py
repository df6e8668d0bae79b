"""Point-to-point byte transports used by the reduction.

An endpoint only needs ``send(peer, payload)`` and ``recv(peer)``. Two
back-ends exist: queues between threads of one process, and TCP where every
message travels on its own connection as ``sender u32 | length u32 | payload``.
"""

from __future__ import annotations

import queue
import socket
import struct
import threading
from typing import Protocol

_FRAME = struct.Struct("<II")


class TransportError(RuntimeError):
    pass


class Endpoint(Protocol):
    rank: int

    def send(self, peer: int, payload: bytes) -> None: ...

    def recv(self, peer: int) -> bytes: ...

    def close(self) -> None: ...


class InProcessNetwork:
    """Fully connected set of queue-backed endpoints."""

    def __init__(self, size: int, timeout: float | None = 60.0):
        self.size = size
        self.timeout = timeout
        self._queues = {(s, r): queue.SimpleQueue() for s in range(size) for r in range(size)}

    def endpoint(self, rank: int) -> InProcessEndpoint:
        return InProcessEndpoint(self, rank)

    def close(self) -> None:
        pass


class InProcessEndpoint:
    def __init__(self, network: InProcessNetwork, rank: int):
        self.network = network
        self.rank = rank

    def send(self, peer: int, payload: bytes) -> None:
        self.network._queues[(self.rank, peer)].put(bytes(payload))

    def recv(self, peer: int) -> bytes:
        try:
            return self.network._queues[(peer, self.rank)].get(timeout=self.network.timeout)
        except queue.Empty:
            raise TransportError(f"rank {self.rank}: no message from {peer}") from None

    def close(self) -> None:
        pass


def read_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(min(n - len(buf), 1 << 20))
        if not chunk:
            raise TransportError(f"connection closed after {len(buf)} of {n} bytes")
        buf += chunk
    return bytes(buf)


def send_frame(sock: socket.socket, sender: int, payload: bytes) -> None:
    sock.sendall(_FRAME.pack(sender, len(payload)) + payload)


def recv_frame(sock: socket.socket) -> tuple[int, bytes]:
    sender, length = _FRAME.unpack(read_exact(sock, _FRAME.size))
    return sender, read_exact(sock, length)


def parse_address(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"expected HOST:PORT, got {text!r}")
    return host, int(port)


class TcpEndpoint:
    """Endpoint listening on its own socket; peers are reached by address."""

    def __init__(self, rank: int, bind: tuple[str, int] = ("127.0.0.1", 0), timeout: float = 60.0):
        self.rank = rank
        self.timeout = timeout
        self.peers: dict[int, tuple[str, int]] = {}
        self._inbox: dict[int, list[bytes]] = {}
        self._lock = threading.Lock()
        self._server = socket.create_server(bind)
        self._server.settimeout(timeout)

    @property
    def address(self) -> tuple[str, int]:
        return self._server.getsockname()[:2]

    def send(self, peer: int, payload: bytes) -> None:
        with socket.create_connection(self.peers[peer], timeout=self.timeout) as sock:
            send_frame(sock, self.rank, payload)
            # wait for the receiver to acknowledge so close() cannot race the read
            read_exact(sock, 1)

    def recv(self, peer: int) -> bytes:
        while True:
            with self._lock:
                pending = self._inbox.get(peer)
                if pending:
                    return pending.pop(0)
            try:
                conn, _ = self._server.accept()
            except socket.timeout:
                raise TransportError(f"rank {self.rank}: timed out waiting for {peer}") from None
            with conn:
                conn.settimeout(self.timeout)
                sender, payload = recv_frame(conn)
                conn.sendall(b"\x01")
            with self._lock:
                self._inbox.setdefault(sender, []).append(payload)

    def close(self) -> None:
        self._server.close()


class TcpNetwork:
    """Loopback TCP endpoints for all ranks, wired to each other."""

    def __init__(self, size: int, host: str = "127.0.0.1", timeout: float = 60.0):
        self.size = size
        self._endpoints = [TcpEndpoint(r, (host, 0), timeout) for r in range(size)]
        addresses = {r: e.address for r, e in enumerate(self._endpoints)}
        for e in self._endpoints:
            e.peers = dict(addresses)

    def endpoint(self, rank: int) -> TcpEndpoint:
        return self._endpoints[rank]

    def close(self) -> None:
        for e in self._endpoints:
            e.close()
