"""Small threaded HTTP/1.1 server used by the discovery service.

One thread per connection, keep-alive by default, bodies only via
Content-Length. This deliberately implements just the slice of HTTP the
suite needs (GET/POST, small bodies, query strings) in exchange for a very
cheap request path; a handler is a callable taking a Request and returning
a Response.
"""
from __future__ import annotations

import logging
import socket
import threading
import time
from dataclasses import dataclass, field
from typing import Callable
from urllib.parse import parse_qsl

log = logging.getLogger(__name__)

MAX_HEADER_BYTES = 16 * 1024
MAX_BODY_BYTES = 256 * 1024
IDLE_TIMEOUT_S = 120.0

_REASONS = {
    200: "OK", 204: "No Content", 400: "Bad Request", 403: "Forbidden",
    404: "Not Found", 405: "Method Not Allowed", 408: "Request Timeout",
    413: "Payload Too Large", 431: "Request Header Fields Too Large",
    500: "Internal Server Error",
}


@dataclass
class Request:
    method: str
    path: str
    query: dict[str, str]
    headers: dict[str, str]
    body: bytes
    peer_ip: str


@dataclass
class Response:
    status: int = 200
    content_type: str = "text/plain; charset=utf-8"
    body: bytes = b""
    headers: list[tuple[str, str]] = field(default_factory=list)


def text_response(status: int, message: str) -> Response:
    return Response(status=status, body=(message + "\n").encode("utf-8"))


Handler = Callable[[Request], Response]
AccessLogger = Callable[[str, str, str, int, int], None]


class HttpServer:
    """Listener + per-connection worker threads dispatching to one handler."""

    def __init__(self, host: str, port: int, handler: Handler,
                 access_logger: AccessLogger | None = None):
        self._handler = handler
        self._access_logger = access_logger
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(512)
        self.host, self.port = self._sock.getsockname()[:2]
        self._stopping = threading.Event()
        self._conns: set[socket.socket] = set()
        self._conns_lock = threading.Lock()
        self._accept_thread: threading.Thread | None = None

    def start(self) -> None:
        self._accept_thread = threading.Thread(
            target=self._accept_loop, name="httpd-accept", daemon=True)
        self._accept_thread.start()

    def stop(self) -> None:
        self._stopping.set()
        try:
            self._sock.close()
        except OSError:
            pass
        with self._conns_lock:
            conns = list(self._conns)
        for conn in conns:
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                conn.close()
            except OSError:
                pass
        if self._accept_thread is not None:
            self._accept_thread.join(timeout=2)

    def _accept_loop(self) -> None:
        while not self._stopping.is_set():
            try:
                conn, addr = self._sock.accept()
            except OSError:
                return
            with self._conns_lock:
                self._conns.add(conn)
            threading.Thread(target=self._serve_connection, args=(conn, addr[0]),
                             name="httpd-conn", daemon=True).start()

    def _serve_connection(self, conn: socket.socket, peer_ip: str) -> None:
        conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        conn.settimeout(IDLE_TIMEOUT_S)
        buf = b""
        try:
            while not self._stopping.is_set():
                head, buf = self._read_head(conn, buf)
                if head is None:
                    return
                started = time.perf_counter()
                request, error, keep_alive = self._parse(head, peer_ip)
                if request is not None and request.method == "POST":
                    body, error2 = self._read_body(conn, buf, request.headers)
                    if error2 is not None:
                        error = error2
                        request = None
                    else:
                        assert body is not None
                        request.body, buf = body
                if error is not None:
                    self._send(conn, error, close=True)
                    self._log(peer_ip, "-", "-", error.status, started)
                    return
                assert request is not None
                try:
                    response = self._handler(request)
                except Exception:
                    log.exception("handler failed for %s %s", request.method, request.path)
                    response = text_response(500, "internal error")
                self._send(conn, response, close=not keep_alive)
                self._log(peer_ip, request.method, request.path, response.status, started)
                if not keep_alive:
                    return
        except (socket.timeout, OSError):
            return
        finally:
            with self._conns_lock:
                self._conns.discard(conn)
            try:
                conn.close()
            except OSError:
                pass

    def _read_head(self, conn: socket.socket, buf: bytes) -> tuple[bytes | None, bytes]:
        while b"\r\n\r\n" not in buf:
            if len(buf) > MAX_HEADER_BYTES:
                self._send(conn, text_response(431, "headers too large"), close=True)
                return None, b""
            chunk = conn.recv(65536)
            if not chunk:
                return None, b""
            buf += chunk
        head, _, rest = buf.partition(b"\r\n\r\n")
        if len(head) > MAX_HEADER_BYTES:
            self._send(conn, text_response(431, "headers too large"), close=True)
            return None, b""
        return head, rest

    def _read_body(self, conn: socket.socket, buf: bytes,
                   headers: dict[str, str]) -> tuple[tuple[bytes, bytes] | None, Response | None]:
        try:
            length = int(headers.get("content-length", "0"))
        except ValueError:
            return None, text_response(400, "bad Content-Length")
        if length < 0 or length > MAX_BODY_BYTES:
            return None, text_response(413, "body too large")
        while len(buf) < length:
            chunk = conn.recv(65536)
            if not chunk:
                return None, text_response(400, "truncated body")
            buf += chunk
        return (buf[:length], buf[length:]), None

    def _parse(self, head: bytes, peer_ip: str) -> tuple[Request | None, Response | None, bool]:
        try:
            lines = head.decode("latin-1").split("\r\n")
            method, target, version = lines[0].split(" ", 2)
        except (UnicodeDecodeError, ValueError):
            return None, text_response(400, "malformed request line"), False
        if version not in ("HTTP/1.1", "HTTP/1.0"):
            return None, text_response(400, "unsupported HTTP version"), False
        headers: dict[str, str] = {}
        for line in lines[1:]:
            name, sep, value = line.partition(":")
            if not sep:
                return None, text_response(400, "malformed header"), False
            headers[name.strip().lower()] = value.strip()
        raw_path, _, raw_query = target.partition("?")
        query = dict(parse_qsl(raw_query, keep_blank_values=True)) if raw_query else {}
        connection = headers.get("connection", "").lower()
        keep_alive = (version == "HTTP/1.1" and connection != "close") or \
                     (version == "HTTP/1.0" and connection == "keep-alive")
        # path stays percent-encoded; routes split it before decoding segments
        request = Request(method=method, path=raw_path, query=query,
                          headers=headers, body=b"", peer_ip=peer_ip)
        return request, None, keep_alive

    def _send(self, conn: socket.socket, response: Response, close: bool) -> None:
        body = response.body
        head = [f"HTTP/1.1 {response.status} {_REASONS.get(response.status, 'Unknown')}",
                f"Content-Type: {response.content_type}",
                f"Content-Length: {len(body)}"]
        for name, value in response.headers:
            head.append(f"{name}: {value}")
        if close:
            head.append("Connection: close")
        payload = ("\r\n".join(head) + "\r\n\r\n").encode("latin-1") + body
        try:
            conn.sendall(payload)
        except OSError:
            pass

    def _log(self, peer_ip: str, method: str, path: str, status: int, started: float) -> None:
        if self._access_logger is not None:
            latency_us = int((time.perf_counter() - started) * 1e6)
            self._access_logger(peer_ip, method, path, status, latency_us)
