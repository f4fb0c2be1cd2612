"""Virtual time for desk-scale execution of minute-scale timers."""
from __future__ import annotations

import heapq
import itertools
import threading
import time
from typing import Callable


class WallClock:
    def now(self) -> float:
        return time.monotonic()


class VirtualClock:
    """Monotone virtual time with named one-shot timers.

    ``advance`` fires every pending deadline up to the target instant, in
    deadline order (ties in scheduling order), including timers scheduled by
    the callbacks themselves.
    """

    def __init__(self, start: float = 0.0):
        self._now = float(start)
        self._heap: list[tuple[float, int, str]] = []
        self._live: dict[str, tuple[float, int]] = {}
        self._seq = itertools.count()
        self._lock = threading.RLock()

    def now(self) -> float:
        return self._now

    def schedule(self, name: str, deadline: float) -> None:
        with self._lock:
            if deadline < self._now:
                raise ValueError(f"deadline {deadline} is in the past (now={self._now})")
            seq = next(self._seq)
            self._live[name] = (deadline, seq)
            heapq.heappush(self._heap, (deadline, seq, name))

    def cancel(self, name: str) -> None:
        with self._lock:
            self._live.pop(name, None)

    def cancel_all(self) -> None:
        with self._lock:
            self._live.clear()
            self._heap.clear()

    @property
    def pending(self) -> list[tuple[float, str]]:
        with self._lock:
            return sorted((d, n) for n, (d, _) in self._live.items())

    def _pop_due(self, target: float):
        while self._heap:
            deadline, seq, name = self._heap[0]
            if self._live.get(name) != (deadline, seq):
                heapq.heappop(self._heap)  # cancelled or rescheduled
                continue
            if deadline > target:
                return None
            heapq.heappop(self._heap)
            del self._live[name]
            return deadline, name
        return None

    def advance(self, duration: float, on_fire: Callable[[str], None] | None = None) -> list[str]:
        if duration < 0:
            raise ValueError("cannot move time backwards")
        with self._lock:
            target = self._now + duration
            fired = []
            while True:
                due = self._pop_due(target)
                if due is None:
                    break
                deadline, name = due
                self._now = deadline
                fired.append(name)
                if on_fire is not None:
                    on_fire(name)
            self._now = target
            return fired
