from __future__ import annotations

import logging
import queue
import socket
import socketserver
import threading

from ..catalog import UnknownSignal
from .core import Broker, Subscription, TypeMismatch
from .protocol import (
    BAD_FRAME, CLIENT_VERBS, MAX_FRAME, TYPE_MISMATCH, UNKNOWN_SIGNAL,
    Frame, FrameError, encode_value, parse_frame, split_value,
)

log = logging.getLogger(__name__)


def _err(req_id: str, code: str, message: str) -> Frame:
    return Frame(req_id, "ERR", f"{code} {message}".replace("\n", " "))


class _Handler(socketserver.StreamRequestHandler):
    server: "_TCPServer"

    def setup(self):
        super().setup()
        self.connection.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.outbox: queue.Queue = queue.Queue()
        self.subs: dict[str, Subscription] = {}
        self.writer = threading.Thread(target=self._write_loop, daemon=True)
        self.writer.start()

    def _write_loop(self):
        while True:
            frame = self.outbox.get()
            if frame is None:
                return
            try:
                self.wfile.write(frame.encode())
                self.wfile.flush()
            except OSError:
                return

    def send(self, frame: Frame):
        self.outbox.put(frame)

    def handle(self):
        broker = self.server.broker
        while True:
            try:
                line = self.rfile.readline(MAX_FRAME + 1)
            except OSError:
                break
            if not line:
                break
            try:
                if len(line) > MAX_FRAME or not line.endswith(b"\n"):
                    raise FrameError("frame too long or truncated")
                frame = parse_frame(line, CLIENT_VERBS)
            except FrameError as exc:
                self.send(_err(exc.req_id, BAD_FRAME, str(exc)))
                break
            try:
                self.dispatch(broker, frame)
            except FrameError as exc:
                self.send(_err(frame.req_id, BAD_FRAME, str(exc)))
                break
            except UnknownSignal as exc:
                self.send(_err(frame.req_id, UNKNOWN_SIGNAL, exc.path))
            except TypeMismatch as exc:
                self.send(_err(frame.req_id, TYPE_MISMATCH, str(exc)))

    def dispatch(self, broker: Broker, frame: Frame):
        rid, verb, rest = frame.req_id, frame.verb, frame.rest
        if verb == "PING":
            self.send(Frame(rid, "ACK"))
        elif verb == "GET":
            if not rest or " " in rest:
                raise FrameError("GET takes exactly one path")
            dp = broker.get_current(rest)
            if dp is None:
                self.send(Frame(rid, "ACK", "NONE"))
            else:
                self.send(Frame(rid, "ACK", f"{dp.timestamp!r} {encode_value(dp.value)}"))
        elif verb == "SET":
            parts = rest.split(" ", 1)
            if len(parts) != 2:
                raise FrameError("SET takes a path and a value")
            value = split_value(parts[1])
            dp = broker.set_current(parts[0], value)
            self.send(Frame(rid, "ACK", repr(dp.timestamp)))
        elif verb == "SUBSCRIBE":
            paths = rest.split()
            if not paths:
                raise FrameError("SUBSCRIBE needs at least one path")
            if rid in self.subs:
                raise FrameError(f"request id {rid} already names a subscription")
            # Validate first so a rejected subscription leaves nothing behind.
            for p in paths:
                broker._entry(p)

            def sink(path, dp, rid=rid):
                self.send(Frame(rid, "EVENT", f"{path} {dp.timestamp!r} {encode_value(dp.value)}"))

            # Holding the store lock keeps ACK, snapshot and live events in commit order.
            with broker._lock:
                self.send(Frame(rid, "ACK", str(len(set(paths)))))
                self.subs[rid] = broker.subscribe(paths, sink)
        elif verb == "UNSUBSCRIBE":
            sub = self.subs.pop(rid, None)
            if sub is None:
                raise FrameError(f"no subscription {rid}")
            sub.close()
            self.send(Frame(rid, "ACK"))

    def finish(self):
        for sub in self.subs.values():
            sub.close()
        self.outbox.put(None)
        self.writer.join(timeout=1)
        try:
            super().finish()
        except OSError:
            pass


class _TCPServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address, broker: Broker):
        self.broker = broker
        super().__init__(address, _Handler)


class BrokerServer:
    """A running TCP endpoint for a :class:`Broker`."""

    def __init__(self, broker: Broker, host: str = "127.0.0.1", port: int = 0):
        self.broker = broker
        self._server = _TCPServer((host, port), broker)
        self._thread = threading.Thread(target=self._server.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True)

    @property
    def address(self) -> tuple[str, int]:
        host, port = self._server.server_address[:2]
        return host, port

    def start(self) -> "BrokerServer":
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._server.serve_forever(poll_interval=0.2)

    def shutdown(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self):
        return self.start() if not self._thread.is_alive() else self

    def __exit__(self, *exc):
        self.shutdown()


def parse_address(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"address must look like host:port, got {addr!r}")
    return host, int(port)


def serve(broker: Broker, listen: str = "127.0.0.1:0") -> BrokerServer:
    host, port = parse_address(listen)
    try:
        return BrokerServer(broker, host, port).start()
    except OSError as exc:
        raise OSError(f"cannot bind {listen}: {exc}") from exc
