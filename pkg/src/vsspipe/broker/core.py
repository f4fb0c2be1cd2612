from __future__ import annotations

import math
import queue
import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Union

from ..catalog import Catalog, SignalEntry, validate_path
from ..clock import WallClock

Value = Union[bool, int, float, str]

_INT_RANGES = {
    "int8": (-(2 ** 7), 2 ** 7 - 1),
    "int16": (-(2 ** 15), 2 ** 15 - 1),
    "int32": (-(2 ** 31), 2 ** 31 - 1),
    "int64": (-(2 ** 63), 2 ** 63 - 1),
    "uint8": (0, 2 ** 8 - 1),
    "uint16": (0, 2 ** 16 - 1),
    "uint32": (0, 2 ** 32 - 1),
    "uint64": (0, 2 ** 64 - 1),
}


class TypeMismatch(TypeError):
    def __init__(self, path: str, expected: str, given: str):
        super().__init__(f"{path}: expected {expected}, got {given}")
        self.path = path
        self.expected = expected
        self.given = given


@dataclass(frozen=True)
class Datapoint:
    value: Value
    unit: str | None = None
    timestamp: float | None = None


def variant(value) -> str:
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "real"
    if isinstance(value, str):
        return "text"
    return type(value).__name__


def expected_variant(datatype: str) -> str:
    if datatype == "boolean":
        return "bool"
    if datatype in _INT_RANGES:
        return "int"
    if datatype in ("float", "double"):
        return "real"
    return "text"


def check_value(entry: SignalEntry, value) -> None:
    """Raise :class:`TypeMismatch` unless ``value`` fits the entry's datatype."""
    want = expected_variant(entry.datatype)
    got = variant(value)
    if got != want:
        raise TypeMismatch(entry.path, f"{want} ({entry.datatype})", got)
    if want == "int":
        lo, hi = _INT_RANGES[entry.datatype]
        if not lo <= value <= hi:
            raise TypeMismatch(entry.path, f"{entry.datatype} in [{lo}, {hi}]", f"int {value}")
    elif want == "real" and not math.isfinite(value):
        raise TypeMismatch(entry.path, entry.datatype, f"non-finite {value}")
    elif want == "text" and entry.allowed is not None and value not in entry.allowed:
        raise TypeMismatch(entry.path, "one of " + "|".join(entry.allowed), repr(value))


class Subscription:
    """Stream of ``(path, Datapoint)`` events.

    Events are queued for :meth:`get`, or handed to ``sink`` when one is
    given (called with the broker lock held, so it must not block).
    """

    def __init__(self, paths: Iterable[str], on_close: Callable[["Subscription"], None] | None = None,
                 sink: Callable[[str, Datapoint], None] | None = None):
        self.order = tuple(dict.fromkeys(paths))
        self.paths = frozenset(self.order)
        self._queue: queue.Queue = queue.Queue()
        self._on_close = on_close
        self._sink = sink
        self.closed = False

    def _push(self, path: str, dp: Datapoint) -> None:
        if self._sink is not None:
            self._sink(path, dp)
        else:
            self._queue.put((path, dp))

    def get(self, timeout: float | None = None) -> tuple[str, Datapoint]:
        return self._queue.get(timeout=timeout)

    def get_nowait(self):
        return self._queue.get_nowait()

    def drain(self) -> list[tuple[str, Datapoint]]:
        out = []
        while True:
            try:
                out.append(self._queue.get_nowait())
            except queue.Empty:
                return out

    def close(self) -> None:
        if not self.closed:
            self.closed = True
            if self._on_close:
                self._on_close(self)

    def __iter__(self):
        while not self.closed:
            yield self.get()


@dataclass(frozen=True)
class TraceEntry:
    seq: int
    timestamp: float
    path: str
    previous: Value | None
    value: Value


class Broker:
    """In-process datapoint store keyed by catalog path.

    All mutations are serialised by one lock; subscriber queues are fed while
    the lock is held, so every subscriber sees events in commit order.
    """

    def __init__(self, catalog: Catalog, clock=None):
        self.catalog = catalog
        self.clock = clock or WallClock()
        self._current: dict[str, Datapoint] = {}
        self._subs: list[Subscription] = []
        self._lock = threading.RLock()
        self._seq = 0
        self.trace: list[TraceEntry] = []

    def _entry(self, path: str) -> SignalEntry:
        return validate_path(self.catalog, path)

    def set_current(self, path: str, dp: Datapoint | Value) -> Datapoint:
        if not isinstance(dp, Datapoint):
            dp = Datapoint(dp)
        entry = self._entry(path)
        check_value(entry, dp.value)
        with self._lock:
            stored = Datapoint(dp.value, dp.unit, self.clock.now())
            previous = self._current.get(path)
            self._current[path] = stored
            self._seq += 1
            self.trace.append(TraceEntry(self._seq, stored.timestamp, path,
                                         previous.value if previous else None, stored.value))
            for sub in self._subs:
                if path in sub.paths:
                    sub._push(path, stored)
        return stored

    def set_current_values(self, values: dict[str, Datapoint | Value]) -> None:
        entries = {p: self._entry(p) for p in values}
        for p, dp in values.items():
            check_value(entries[p], dp.value if isinstance(dp, Datapoint) else dp)
        for p, dp in values.items():
            self.set_current(p, dp)

    def get_current(self, path: str) -> Datapoint | None:
        self._entry(path)
        with self._lock:
            return self._current.get(path)

    def subscribe(self, paths: Iterable[str], sink=None) -> Subscription:
        paths = list(paths)
        for p in paths:
            self._entry(p)
        sub = Subscription(paths, self._unsubscribe, sink)
        with self._lock:
            for p in sub.order:
                if p in self._current:
                    sub._push(p, self._current[p])
            self._subs.append(sub)
        return sub

    def _unsubscribe(self, sub: Subscription) -> None:
        with self._lock:
            if sub in self._subs:
                self._subs.remove(sub)

    def sync(self) -> None:
        """Barrier: in-process delivery is synchronous, so nothing to wait for."""

    def history(self, path: str) -> list[TraceEntry]:
        with self._lock:
            return [t for t in self.trace if t.path == path]
