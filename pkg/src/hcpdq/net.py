"""Framed TCP transport for the query protocol.

Frames are [type: 1 byte][length: 4 bytes, network order][payload]. A
connection starts with a HELLO exchange (protocol version, parameters and
the client's public key material; secret keys never traverse the wire),
then any number of QUERY frames, each answered by exactly one ANSWER or
ERROR frame. Unknown frame types and framing violations produce an ERROR
frame and close the connection.
"""

from __future__ import annotations

import socket
import socketserver
import struct
import threading
from dataclasses import dataclass

from .compress import CompressedAnswer, CompressionParams
from .heiface import BACKEND_BGV, BACKEND_SIMULATOR, HeParams, SimulatorBackend
from .pdq import ClientState, Database, PdqQuery, PdqResult, answer, query, recover

PROTOCOL_VERSION = 1

MSG_HELLO = 0x01
MSG_QUERY = 0x02
MSG_ANSWER = 0x03
MSG_ERROR = 0x04

ERR_BAD_VERSION = 0x01
ERR_PARAM_MISMATCH = 0x02
ERR_MALFORMED = 0x03
ERR_SERVER_FAILURE = 0x04
ERR_UNKNOWN_TYPE = 0x05

MAX_PAYLOAD = 1 << 30

_FRAME_HEADER = struct.Struct(">BI")


class FrameError(ValueError):
    """Framing violation: truncated stream, oversize payload, bad header."""


class RemoteError(RuntimeError):
    """The peer answered with an ERROR frame."""

    def __init__(self, code: int, message: str):
        super().__init__(f"remote error {code}: {message}")
        self.code = code


def pack_frame(msg_type: int, payload: bytes) -> bytes:
    if len(payload) > MAX_PAYLOAD:
        raise FrameError(f"payload of {len(payload)} bytes exceeds the frame limit")
    return _FRAME_HEADER.pack(msg_type, len(payload)) + payload


def read_frame(stream) -> tuple[int, bytes]:
    head = stream.read(_FRAME_HEADER.size)
    if len(head) == 0:
        raise EOFError("connection closed")
    if len(head) < _FRAME_HEADER.size:
        raise FrameError("truncated frame header")
    msg_type, length = _FRAME_HEADER.unpack(head)
    if length > MAX_PAYLOAD:
        raise FrameError(f"frame of {length} bytes exceeds the limit")
    payload = stream.read(length)
    if len(payload) < length:
        raise FrameError("truncated frame payload")
    return msg_type, payload


def pack_error(code: int, message: str) -> bytes:
    return pack_frame(MSG_ERROR, bytes([code]) + message.encode("utf-8"))


def parse_error(payload: bytes) -> tuple[int, str]:
    return payload[0], payload[1:].decode("utf-8", errors="replace")


_HELLO_HEAD = struct.Struct("<HIQBIIB")


def pack_hello(params: CompressionParams, backend_id: int, keyset_blob: bytes) -> bytes:
    he = params.he
    head = _HELLO_HEAD.pack(
        PROTOCOL_VERSION, he.n, he.p, he.max_level, params.N, params.s, backend_id
    )
    return head + struct.pack("<I", len(keyset_blob)) + keyset_blob


def parse_hello(payload: bytes) -> tuple[int, HeParams, int, int, int, bytes]:
    version, n, p, max_level, N, s, backend_id = _HELLO_HEAD.unpack(
        payload[: _HELLO_HEAD.size]
    )
    off = _HELLO_HEAD.size
    (blob_len,) = struct.unpack("<I", payload[off : off + 4])
    blob = payload[off + 4 : off + 4 + blob_len]
    return version, HeParams(n, p, max_level), N, s, backend_id, blob


def make_backend(backend_name: str, params: HeParams, seed: int | None = None):
    if backend_name in ("sim", "simulator"):
        return SimulatorBackend(params, seed=seed)
    if backend_name in ("bgv", "bgv-mini"):
        from .bgv import BgvBackend

        return BgvBackend(params, seed=seed)
    raise ValueError(f"unknown backend {backend_name!r}")


def backend_name_of(backend_id: int) -> str:
    return {BACKEND_SIMULATOR: "sim", BACKEND_BGV: "bgv"}[backend_id]


@dataclass
class ServerConfig:
    db: Database
    s: int
    backend: str = "sim"
    record_path: str | None = None


class _Recorder:
    def __init__(self, path: str | None):
        self._fh = open(path, "ab") if path else None
        self._lock = threading.Lock()

    def log(self, direction: bytes, frame: bytes) -> None:
        if self._fh is None:
            return
        with self._lock:
            self._fh.write(direction + frame)
            self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()


class _PdqHandler(socketserver.BaseRequestHandler):
    def handle(self):
        server: PdqServer = self.server  # type: ignore[assignment]
        cfg = server.config
        stream = self.request.makefile("rb")
        rec = server.recorder

        def send(frame: bytes) -> None:
            rec.log(b"<", frame)
            self.request.sendall(frame)

        state = None  # (params, backend, server_keys)
        try:
            while True:
                msg_type, payload = read_frame(stream)
                rec.log(b">", pack_frame(msg_type, payload))
                if msg_type == MSG_HELLO:
                    try:
                        version, he, N, s, backend_id, blob = parse_hello(payload)
                    except (struct.error, ValueError) as exc:
                        send(pack_error(ERR_MALFORMED, f"bad HELLO: {exc}"))
                        return
                    if version != PROTOCOL_VERSION:
                        send(pack_error(ERR_BAD_VERSION, f"want {PROTOCOL_VERSION}"))
                        return
                    if backend_name_of(backend_id) != cfg.backend:
                        send(pack_error(ERR_PARAM_MISMATCH, "backend mismatch"))
                        return
                    if N != len(cfg.db) or s != cfg.s or he.p != cfg.db.p:
                        send(
                            pack_error(
                                ERR_PARAM_MISMATCH,
                                f"server has N={len(cfg.db)} s={cfg.s} p={cfg.db.p}",
                            )
                        )
                        return
                    params = CompressionParams(N=N, s=s, he=he)
                    backend = make_backend(cfg.backend, he)
                    server_keys = backend.deserialize_keyset(blob)
                    state = (params, backend, server_keys)
                    send(pack_frame(MSG_HELLO, pack_hello(params, backend_id, b"")))
                elif msg_type == MSG_QUERY:
                    if state is None:
                        send(pack_error(ERR_MALFORMED, "QUERY before HELLO"))
                        return
                    params, backend, server_keys = state
                    try:
                        q = PdqQuery.deserialize(payload, backend)
                        ans = answer(q, cfg.db, params, backend, server_keys)
                    except Exception as exc:  # answer failures are reported, not fatal
                        send(pack_error(ERR_SERVER_FAILURE, str(exc)))
                        continue
                    send(pack_frame(MSG_ANSWER, ans.serialize(backend)))
                else:
                    send(pack_error(ERR_UNKNOWN_TYPE, f"unknown type {msg_type:#x}"))
                    return
        except EOFError:
            return
        except FrameError as exc:
            try:
                send(pack_error(ERR_MALFORMED, str(exc)))
            except OSError:
                pass
            return
        finally:
            stream.close()


class PdqServer(socketserver.ThreadingTCPServer):
    """One session per connection; the database and config are shared
    read-only."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], config: ServerConfig):
        super().__init__(address, _PdqHandler)
        self.config = config
        self.recorder = _Recorder(config.record_path)

    def server_close(self):
        super().server_close()
        self.recorder.close()


def serve_pdq(host: str, port: int, config: ServerConfig) -> PdqServer:
    """Bind and return the server; the caller drives serve_forever()."""
    return PdqServer((host, port), config)


class PdqClient:
    """Client connection: HELLO once, then any number of queries."""

    def __init__(
        self,
        addr: tuple[str, int],
        params: CompressionParams,
        backend,
        state: ClientState,
        timeout: float = 120.0,
    ):
        self.params = params
        self.backend = backend
        self.state = state
        self._sock = socket.create_connection(addr, timeout=timeout)
        self._stream = self._sock.makefile("rb")
        blob = backend.serialize_keyset(state.keys.public_only(), include_secret=False)
        self._sock.sendall(
            pack_frame(MSG_HELLO, pack_hello(params, backend.backend_id, blob))
        )
        msg_type, payload = read_frame(self._stream)
        if msg_type == MSG_ERROR:
            raise RemoteError(*parse_error(payload))
        if msg_type != MSG_HELLO:
            raise FrameError(f"expected HELLO reply, got type {msg_type:#x}")

    def query_x(self, x: int, seed: int = 0) -> PdqResult:
        q = query(x, self.state, self.backend)
        self._sock.sendall(pack_frame(MSG_QUERY, q.serialize(self.backend)))
        msg_type, payload = read_frame(self._stream)
        if msg_type == MSG_ERROR:
            raise RemoteError(*parse_error(payload))
        if msg_type != MSG_ANSWER:
            raise FrameError(f"expected ANSWER, got type {msg_type:#x}")
        ans = CompressedAnswer.deserialize(payload, self.backend)
        return recover(ans, self.state, self.backend, seed=seed)

    def close(self) -> None:
        try:
            self._stream.close()
        finally:
            self._sock.close()

    def __enter__(self) -> "PdqClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
