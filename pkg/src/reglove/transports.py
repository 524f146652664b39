"""Byte transports for the framed protocol: in-process, TCP, or pseudo-terminal.

All three move the same bit-exact frame format; pick one with make_pair /
tcp_listen / tcp_connect / pty_pair. Endpoints expose send_bytes /
recv_available plus an exchange() helper shaped for LinkEndpoint's channel
argument (send one frame, poll briefly for response bytes).
"""
from __future__ import annotations

import os
import selectors
import socket
import threading
import time
from collections import deque
from typing import Optional

from .protocol import Decoded, StreamDecoder


class FrameEndpoint:
    """One side of a byte pipe plus an incremental frame decoder."""

    def __init__(self, send_fn, recv_fn, close_fn=None) -> None:
        self._send = send_fn
        self._recv = recv_fn
        self._close = close_fn
        self.decoder = StreamDecoder()

    def send_bytes(self, data: bytes) -> None:
        self._send(data)

    def recv_available(self) -> bytes:
        return self._recv()

    def poll_frames(self) -> list[Decoded]:
        data = self.recv_available()
        return self.decoder.feed(data) if data else []

    def exchange(self, frame: bytes, wait_s: float = 0.05) -> bytes:
        """Channel-shaped helper: send one frame, gather response bytes."""
        self.send_bytes(frame)
        deadline = time.monotonic() + wait_s
        out = b""
        while time.monotonic() < deadline:
            chunk = self.recv_available()
            if chunk:
                out += chunk
                break
            time.sleep(0.001)
        return out

    def close(self) -> None:
        if self._close is not None:
            self._close()


def make_pair() -> tuple[FrameEndpoint, FrameEndpoint]:
    """In-process pair backed by two byte queues (the test/sim transport)."""
    a_to_b: deque[bytes] = deque()
    b_to_a: deque[bytes] = deque()
    lock = threading.Lock()

    def sender(queue):
        def send(data: bytes) -> None:
            with lock:
                queue.append(bytes(data))

        return send

    def receiver(queue):
        def recv() -> bytes:
            with lock:
                if not queue:
                    return b""
                out = b"".join(queue)
                queue.clear()
                return out

        return recv

    return (
        FrameEndpoint(sender(a_to_b), receiver(b_to_a)),
        FrameEndpoint(sender(b_to_a), receiver(a_to_b)),
    )


def _socket_endpoint(sock: socket.socket) -> FrameEndpoint:
    sock.setblocking(False)
    selector = selectors.DefaultSelector()
    selector.register(sock, selectors.EVENT_READ)

    def send(data: bytes) -> None:
        sock.sendall(data)

    def recv() -> bytes:
        out = b""
        while selector.select(timeout=0):
            try:
                chunk = sock.recv(4096)
            except BlockingIOError:
                break
            if not chunk:
                break
            out += chunk
        return out

    def close() -> None:
        selector.close()
        sock.close()

    return FrameEndpoint(send, recv, close)


class TcpFrameListener:
    """Accepts one peer at a time on a local port."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0) -> None:
        self._server = socket.create_server((host, port))
        self.address = self._server.getsockname()

    def accept(self, timeout_s: float = 10.0) -> FrameEndpoint:
        self._server.settimeout(timeout_s)
        conn, _ = self._server.accept()
        return _socket_endpoint(conn)

    def close(self) -> None:
        self._server.close()


def tcp_listen(host: str = "127.0.0.1", port: int = 0) -> TcpFrameListener:
    return TcpFrameListener(host, port)


def tcp_connect(host: str, port: int, timeout_s: float = 10.0) -> FrameEndpoint:
    sock = socket.create_connection((host, port), timeout=timeout_s)
    return _socket_endpoint(sock)


def pty_pair() -> tuple[FrameEndpoint, FrameEndpoint, str]:
    """Pseudo-terminal transport: returns (master endpoint, slave endpoint,
    slave device path). The device path can be handed to external tools that
    expect a serial port."""
    master_fd, slave_fd = os.openpty()
    os.set_blocking(master_fd, False)
    os.set_blocking(slave_fd, False)
    # raw mode: no echo, no newline translation, byte-exact passthrough
    import termios
    import tty

    tty.setraw(master_fd)
    tty.setraw(slave_fd)

    def endpoint(fd: int) -> FrameEndpoint:
        def send(data: bytes) -> None:
            written = 0
            while written < len(data):
                written += os.write(fd, data[written:])

        def recv() -> bytes:
            out = b""
            while True:
                try:
                    chunk = os.read(fd, 4096)
                except BlockingIOError:
                    break
                if not chunk:
                    break
                out += chunk
            return out

        return FrameEndpoint(send, recv, lambda: os.close(fd))

    return endpoint(master_fd), endpoint(slave_fd), os.ttyname(slave_fd)


TRANSPORT_NAMES = ("in_process", "tcp", "pty")
