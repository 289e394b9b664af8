"""Deterministic discrete-event engine: virtual time, ordered dispatch, seeded RNG.

Simulation time is integer nanoseconds. Events fire in (fire_at, seq) order
where seq is a global insertion counter, giving a total order and therefore
bit-identical replays for a fixed seed and configuration.
"""
from __future__ import annotations

import heapq
import random
from dataclasses import dataclass
from enum import IntEnum
from typing import Any, Callable

# Time unit helpers (SimTime is a plain int, nanoseconds since run start).
US = 1_000
MS = 1_000_000
SEC = 1_000_000_000


class EventKind(IntEnum):
    PACKET_ARRIVAL = 0
    PACKET_DEQUEUE = 1
    TRANSMIT_COMPLETE = 2
    WINDOW_TICK = 3
    CNP_DELIVERY = 4
    RATE_TIMER = 5
    FLOW_START = 6
    JOB_ARRIVAL = 7
    FAULT_TRIGGER = 8


@dataclass(frozen=True)
class Event:
    """One scheduled occurrence; equal fire_at ties break on seq."""

    fire_at: int
    seq: int
    kind: EventKind
    payload: Any


class SchedulingError(RuntimeError):
    """Scheduling an event in the past is a harness bug, not a runtime condition."""


class Engine:
    """Single-timeline event loop.

    Handlers are callables registered per event kind (or passed inline at
    schedule time); they receive the payload.
    """

    __slots__ = ("_heap", "_seq", "_now", "_dispatched", "trace")

    def __init__(self) -> None:
        self._heap: list[tuple[int, int, int, Callable[[Any], None], Any]] = []
        self._seq = 0
        self._now = 0
        self._dispatched = 0
        # When set to a list, every dispatch appends (fire_at, seq, kind).
        self.trace: list[tuple[int, int, int]] | None = None

    def now(self) -> int:
        return self._now

    @property
    def dispatched(self) -> int:
        return self._dispatched

    def schedule(self, fire_at: int, kind: int, handler: Callable[[Any], None],
                 payload: Any = None) -> int:
        """Queue an event; returns its seq (the event id)."""
        if fire_at < self._now:
            raise SchedulingError(
                f"event kind={kind} scheduled at t={fire_at} < now={self._now}")
        self._seq += 1
        heapq.heappush(self._heap, (fire_at, self._seq, kind, handler, payload))
        return self._seq

    def run_until(self, t_end: int) -> int:
        """Dispatch every event with fire_at <= t_end; returns the dispatch count.

        The clock ends at t_end even if the queue drains earlier (idle time
        passes), and never moves backwards across calls.
        """
        heap = self._heap
        pop = heapq.heappop
        count = 0
        trace = self.trace
        while heap:
            entry = heap[0]
            if entry[0] > t_end:
                break
            pop(heap)
            self._now = entry[0]
            if trace is not None:
                trace.append((entry[0], entry[1], entry[2]))
            entry[3](entry[4])
            count += 1
        if t_end > self._now:
            self._now = t_end
        self._dispatched += count
        return count

    def run(self) -> int:
        """Dispatch until the queue is empty."""
        heap = self._heap
        pop = heapq.heappop
        count = 0
        trace = self.trace
        while heap:
            entry = pop(heap)
            self._now = entry[0]
            if trace is not None:
                trace.append((entry[0], entry[1], entry[2]))
            entry[3](entry[4])
            count += 1
        self._dispatched += count
        return count


class Substream:
    """One named draw sequence of an Rng; deterministic given (seed, name)."""

    __slots__ = ("name", "_random", "random", "expovariate", "randrange", "choice")

    def __init__(self, seed: int, name: str):
        self.name = name
        # String seeding hashes via sha512 underneath: stable across platforms.
        self._random = random.Random(f"{seed}/{name}")
        self.random = self._random.random
        self.expovariate = self._random.expovariate
        self.randrange = self._random.randrange
        self.choice = self._random.choice

    def uniform01(self) -> float:
        return self.random()


class Rng:
    """Seeded random source fanned out into independent named sub-streams.

    Each consumer (RED coins, marking coins, arrival processes, ...) draws
    from its own stream, so adding or removing one consumer does not perturb
    the sequences seen by the others.
    """

    __slots__ = ("seed", "_streams")

    def __init__(self, seed: int):
        self.seed = seed
        self._streams: dict[str, Substream] = {}

    def stream(self, name: str) -> Substream:
        s = self._streams.get(name)
        if s is None:
            s = Substream(self.seed, name)
            self._streams[name] = s
        return s

    def uniform01(self, name: str = "main") -> float:
        return self.stream(name).random()
