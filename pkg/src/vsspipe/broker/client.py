from __future__ import annotations

import itertools
import socket
import threading
from concurrent.futures import Future

from ..catalog import UnknownSignal
from .core import Datapoint, Subscription, TypeMismatch
from .protocol import (
    SERVER_VERBS, TYPE_MISMATCH, UNKNOWN_SIGNAL,
    Frame, FrameError, encode_value, parse_frame, parse_timestamp, split_value,
)
from .server import parse_address


class BrokerConnectionError(ConnectionError):
    pass


class BrokerProtocolError(RuntimeError):
    pass


class BrokerClient:
    """Synchronous client for the line protocol; mirrors :class:`Broker`'s API."""

    def __init__(self, host: str, port: int, timeout: float = 10.0):
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise BrokerConnectionError(f"cannot connect to {host}:{port}: {exc}") from exc
        self._sock.settimeout(None)
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._rfile = self._sock.makefile("rb")
        self._wlock = threading.Lock()
        self._ids = itertools.count(1)
        self._pending: dict[str, Future] = {}
        self._subs: dict[str, Subscription] = {}
        self._plock = threading.Lock()
        self.timeout = timeout
        self.closed = False
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    @classmethod
    def connect(cls, address: str, timeout: float = 10.0) -> "BrokerClient":
        host, port = parse_address(address)
        return cls(host, port, timeout)

    def _read_loop(self):
        error: Exception = BrokerConnectionError("connection closed")
        try:
            for line in self._rfile:
                try:
                    frame = parse_frame(line, SERVER_VERBS)
                except FrameError as exc:
                    error = BrokerProtocolError(f"bad frame from server: {exc}")
                    break
                self._dispatch(frame)
        except OSError as exc:
            error = BrokerConnectionError(str(exc))
        self.closed = True
        with self._plock:
            pending, self._pending = self._pending, {}
        for fut in pending.values():
            if not fut.done():
                fut.set_exception(error)

    def _dispatch(self, frame: Frame):
        if frame.verb == "EVENT":
            sub = self._subs.get(frame.req_id)
            if sub is None:
                return
            path, ts, value = frame.rest.split(" ", 2)
            sub._push(path, Datapoint(split_value(value), None, parse_timestamp(ts)))
            return
        with self._plock:
            fut = self._pending.pop(frame.req_id, None)
        if fut is not None and not fut.done():
            fut.set_result(frame)

    def _request(self, verb: str, rest: str = "", on_ack=None) -> Frame:
        if self.closed:
            raise BrokerConnectionError("client is closed")
        rid = f"c{next(self._ids)}"
        fut: Future = Future()
        with self._plock:
            self._pending[rid] = fut
        if on_ack is not None:
            on_ack(rid)
        try:
            with self._wlock:
                self._sock.sendall(Frame(rid, verb, rest).encode())
        except OSError as exc:
            raise BrokerConnectionError(str(exc)) from exc
        reply = fut.result(timeout=self.timeout)
        if reply.verb == "ERR":
            code, _, message = reply.rest.partition(" ")
            if code == UNKNOWN_SIGNAL:
                raise UnknownSignal(message)
            if code == TYPE_MISMATCH:
                path = message.split(":", 1)[0]
                raise TypeMismatch(path, "catalog datatype", message)
            raise BrokerProtocolError(f"{code} {message}")
        return reply

    def get_current(self, path: str) -> Datapoint | None:
        reply = self._request("GET", path)
        if reply.rest == "NONE":
            return None
        ts, value = reply.rest.split(" ", 1)
        return Datapoint(split_value(value), None, parse_timestamp(ts))

    def set_current(self, path: str, dp) -> Datapoint:
        if not isinstance(dp, Datapoint):
            dp = Datapoint(dp)
        reply = self._request("SET", f"{path} {encode_value(dp.value)}")
        return Datapoint(dp.value, dp.unit, parse_timestamp(reply.rest))

    def set_current_values(self, values: dict) -> None:
        for path, dp in values.items():
            self.set_current(path, dp)

    def subscribe(self, paths, sink=None) -> Subscription:
        paths = list(paths)
        holder = {}

        def register(rid):
            # Registered before sending so snapshot events are never dropped.
            sub = Subscription(paths, lambda s, rid=rid: self._unsubscribe(rid), sink)
            holder["sub"] = sub
            self._subs[rid] = sub
            holder["rid"] = rid

        try:
            self._request("SUBSCRIBE", " ".join(paths), on_ack=register)
        except Exception:
            self._subs.pop(holder.get("rid"), None)
            raise
        return holder["sub"]

    def _unsubscribe(self, rid: str):
        self._subs.pop(rid, None)
        if not self.closed:
            try:
                self._request("UNSUBSCRIBE", "")
            except Exception:
                pass

    def sync(self) -> None:
        """Round-trip barrier: events committed before the call have been delivered."""
        self._request("PING")

    def send_raw(self, data: bytes) -> None:
        with self._wlock:
            self._sock.sendall(data)

    def close(self) -> None:
        self.closed = True
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
