"""Framed inference service over a local stream socket.

Wire format (little-endian):

    request:  'NDIR' | version u32 | H u32 | W u32 | 7*H*W f32
    response: 'NDIS' | H u32 | W u32 | 2*H*W f32 (height, then log sigma)
    error:    'NDIE' | code u32 | message length u32 | UTF-8 message

One request is handled at a time per connection; multiple connections run
concurrently against the same immutable weights. Malformed frames get an
error frame and the connection stays open; after a truncation/timeout error
the client must start a fresh frame. Heights in the response are meters
relative to the reference plane of the request's feature tensor.

Error codes: 1 bad magic, 2 unsupported version, 3 bad shape,
4 truncated/timed-out frame, 5 internal failure.
"""

from __future__ import annotations

import math
import socket
import socketserver
import struct
import threading

import numpy as np
import torch

from .model import Generator
from .train import load_generator

REQUEST_MAGIC = b"NDIR"
RESPONSE_MAGIC = b"NDIS"
ERROR_MAGIC = b"NDIE"
PROTOCOL_VERSION = 1

ERR_BAD_MAGIC = 1
ERR_BAD_VERSION = 2
ERR_BAD_SHAPE = 3
ERR_TRUNCATED = 4
ERR_INTERNAL = 5

MAX_SIDE = 4096


class _Truncated(Exception):
    pass


class _Closed(Exception):
    pass


def _recv_exact(conn: socket.socket, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        try:
            chunk = conn.recv(min(remaining, 1 << 20))
        except TimeoutError:
            raise _Truncated(f"timed out with {remaining} of {n} bytes outstanding")
        if not chunk:
            if remaining == n and not chunks:
                raise _Closed()
            raise _Truncated(f"stream closed with {remaining} bytes outstanding")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def pack_error(code: int, message: str) -> bytes:
    msg = message.encode("utf-8")
    return struct.pack("<4sII", ERROR_MAGIC, code, len(msg)) + msg


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        conn = self.request
        server: ReconServer = self.server.owner
        while True:
            conn.settimeout(None)
            try:
                magic = _recv_exact(conn, 4)
            except (_Closed, _Truncated, ConnectionError, OSError):
                return
            conn.settimeout(server.read_timeout)
            try:
                if magic != REQUEST_MAGIC:
                    conn.sendall(pack_error(ERR_BAD_MAGIC, f"bad magic {magic!r}"))
                    continue
                version, h, w = struct.unpack("<III", _recv_exact(conn, 12))
                if version != PROTOCOL_VERSION:
                    conn.sendall(pack_error(ERR_BAD_VERSION, f"unsupported version {version}"))
                    continue
                if not (0 < h <= MAX_SIDE and 0 < w <= MAX_SIDE):
                    conn.sendall(pack_error(ERR_BAD_SHAPE, f"unreasonable shape {h}x{w}"))
                    continue
                if h % 4 or w % 4:
                    conn.sendall(pack_error(ERR_BAD_SHAPE, f"shape {h}x{w} not divisible by 4"))
                    continue
                payload = _recv_exact(conn, 7 * h * w * 4)
                try:
                    response = server.infer_bytes(payload, h, w)
                except Exception as exc:  # inference failure must not kill the connection
                    conn.sendall(pack_error(ERR_INTERNAL, f"inference failed: {exc}"))
                    continue
                conn.sendall(response)
            except _Truncated as exc:
                try:
                    conn.sendall(pack_error(ERR_TRUNCATED, str(exc)))
                except OSError:
                    return
            except (_Closed, ConnectionError, OSError):
                return


class _TCPServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class ReconServer:
    """Serves a trained generator; weights are immutable while serving."""

    def __init__(self, checkpoint=None, generator: Generator | None = None,
                 host: str = "127.0.0.1", port: int = 0,
                 height_scale: float = 1.0, read_timeout: float = 2.0):
        if generator is not None:
            self.generator = generator.eval()
            self.height_scale = height_scale
        elif checkpoint is not None:
            self.generator, self.height_scale = load_generator(checkpoint)
        else:
            raise ValueError("need a checkpoint path or a generator")
        self.read_timeout = read_timeout
        self._server = _TCPServer((host, port), _Handler)
        self._server.owner = self
        self._thread = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address

    def infer_bytes(self, payload: bytes, h: int, w: int) -> bytes:
        x = np.frombuffer(payload, dtype="<f4").reshape(1, 7, h, w)
        with torch.no_grad():
            height, log_sigma, _ = self.generator(torch.from_numpy(x.copy()), with_edges=False)
        hm = (height[0, 0].numpy() * self.height_scale).astype("<f4")
        ls = (log_sigma[0, 0].numpy() + math.log(self.height_scale)).astype("<f4")
        return struct.pack("<4sII", RESPONSE_MAGIC, h, w) + hm.tobytes() + ls.tobytes()

    def start(self):
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self):
        self._server.serve_forever()

    def stop(self):
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
