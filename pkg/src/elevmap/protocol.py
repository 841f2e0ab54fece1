"""Framed tensor protocol between the mapping engine and the reconstruction service.

All integers are little-endian u32, all floats little-endian f32.

    request:  'NDIR' | version | H | W | 7*H*W floats (feature tensor)
    response: 'NDIS' | H | W | 2*H*W floats (height map, then log sigma)
    error:    'NDIE' | code | message length | UTF-8 message

One request per round trip. The service only accepts H and W divisible by
4; the client transparently zero-pads smaller inputs up to the next
multiple of 4 (zeros mean "unobserved") and crops the response back.

Error codes: 1 bad magic, 2 unsupported version, 3 bad shape,
4 truncated/timed-out frame, 5 internal failure.
"""

from __future__ import annotations

import socket
import struct

import numpy as np

from .exceptions import EndpointError, ProtocolError

REQUEST_MAGIC = b"NDIR"
RESPONSE_MAGIC = b"NDIS"
ERROR_MAGIC = b"NDIE"
PROTOCOL_VERSION = 1

ERR_BAD_MAGIC = 1
ERR_BAD_VERSION = 2
ERR_BAD_SHAPE = 3
ERR_TRUNCATED = 4
ERR_INTERNAL = 5

CHANNELS = 7


def pack_request(tensor: np.ndarray) -> bytes:
    t = np.ascontiguousarray(tensor, dtype="<f4")
    if t.ndim != 3 or t.shape[0] != CHANNELS:
        raise ProtocolError(f"feature tensor must be ({CHANNELS}, H, W), got {t.shape}")
    h, w = t.shape[1:]
    return struct.pack("<4sIII", REQUEST_MAGIC, PROTOCOL_VERSION, h, w) + t.tobytes()


def pack_response(height: np.ndarray, log_sigma: np.ndarray) -> bytes:
    hm = np.ascontiguousarray(height, dtype="<f4")
    ls = np.ascontiguousarray(log_sigma, dtype="<f4")
    if hm.ndim != 2 or ls.shape != hm.shape:
        raise ProtocolError("height and log-sigma maps must be 2D with equal shapes")
    h, w = hm.shape
    return struct.pack("<4sII", RESPONSE_MAGIC, h, w) + hm.tobytes() + ls.tobytes()


def pack_error(code: int, message: str) -> bytes:
    msg = message.encode("utf-8")
    return struct.pack("<4sII", ERROR_MAGIC, code, len(msg)) + msg


def recv_exact(sock: socket.socket, n: int) -> bytes:
    """Read exactly n bytes or raise EndpointError on EOF."""
    chunks = []
    remaining = n
    while remaining:
        chunk = sock.recv(min(remaining, 1 << 20))
        if not chunk:
            raise EndpointError(f"connection closed with {remaining} bytes outstanding")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def pad_to_multiple(tensor: np.ndarray, multiple: int = 4) -> tuple[np.ndarray, int, int]:
    """Zero-pad the bottom/right of a (C, H, W) tensor so H and W divide `multiple`."""
    _, h, w = tensor.shape
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return tensor, h, w
    return np.pad(tensor, ((0, 0), (0, ph), (0, pw))), h, w


class ReconClient:
    """Blocking one-request-per-call client for the reconstruction service."""

    def __init__(self, host: str, port: int, timeout: float = 30.0):
        self.address = (host, int(port))
        self.timeout = timeout
        self._sock = None

    def connect(self):
        try:
            self._sock = socket.create_connection(self.address, timeout=self.timeout)
        except OSError as exc:
            raise EndpointError(f"cannot reach endpoint {self.address[0]}:{self.address[1]}: {exc}") from exc
        return self

    def close(self):
        if self._sock is not None:
            self._sock.close()
            self._sock = None

    def __enter__(self):
        return self.connect()

    def __exit__(self, *exc):
        self.close()

    def infer(self, tensor: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Send one feature tensor; return (height, log_sigma) as float32 maps.

        Inputs whose H or W is not a multiple of 4 are zero-padded for the
        wire and the response is cropped back to the original shape.
        """
        if self._sock is None:
            self.connect()
        padded, h, w = pad_to_multiple(np.asarray(tensor, dtype=np.float32))
        try:
            self._sock.sendall(pack_request(padded))
            magic = recv_exact(self._sock, 4)
            if magic == ERROR_MAGIC:
                code, msg_len = struct.unpack("<II", recv_exact(self._sock, 8))
                msg = recv_exact(self._sock, msg_len).decode("utf-8", "replace")
                raise ProtocolError(f"endpoint error {code}: {msg}")
            if magic != RESPONSE_MAGIC:
                raise ProtocolError(f"unexpected frame magic {magic!r}")
            rh, rw = struct.unpack("<II", recv_exact(self._sock, 8))
            payload = recv_exact(self._sock, 2 * 4 * rh * rw)
        except OSError as exc:
            raise EndpointError(f"endpoint I/O failed: {exc}") from exc
        maps = np.frombuffer(payload, dtype="<f4").reshape(2, rh, rw)
        if rh < h or rw < w:
            raise ProtocolError(f"response {rh}x{rw} smaller than request {h}x{w}")
        return maps[0, :h, :w].copy(), maps[1, :h, :w].copy()
