"""In-network progress tracking and selective ECN marking of outpacing flows.

Every switch keeps one compact state block per registered collective job.
The block tracks the lowest step index currently observed (``step_min``,
advanced optimistically on LAST packets and corrected lazily downwards when
an older step reappears) and a time-windowed max-PSN reference for that
lagging step (``psn_rec``). A packet from a step above ``step_min`` is an
*outpacing* packet: its progress gap ``alpha * psn / psn_rec`` converts to a
marking probability ``min(1, k * gap)``, and the resulting ECN mark slows
the outpacing sender through the ordinary congestion-control loop.

``alpha`` is an integer aggressiveness factor adapted once per window: it
steps +1 while outpacing packets make up at least a fraction ``tau`` of the
job's traffic at this switch, and decays -1 otherwise, never dropping below
1. The ratio test is evaluated division-free (``cnt_op * den >= num *
cnt_total``), the form a switch pipeline can execute.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

LAGGING = "lagging"
OUTPACING = "outpacing"
WARMUP = "warmup"


@dataclass
class TrackerParams:
    """Control constants for progress tracking and selective marking."""

    k: float = 0.01            # marking gain; probability = min(1, k * gap)
    tau: float = 0.25          # outpacing-traffic fraction that grows alpha
    t_win: int = 100_000       # window length, ns
    n_warmup: int = 100        # psn_rec must exceed this before marking engages
    n_sample: int = 50         # min packets in a window for an alpha update
    hw_mode: str = "exact"     # "exact" | "table-approx"
    # Integer form of tau, derived; the ratio check never divides.
    tau_num: int = field(init=False, repr=False)
    tau_den: int = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.k < 0:
            raise ValueError(f"k must be >= 0, got {self.k}")
        if not (0 < self.tau < 1):
            raise ValueError(f"tau must be in (0, 1), got {self.tau}")
        if self.t_win <= 0:
            raise ValueError(f"t_win must be > 0, got {self.t_win}")
        if self.hw_mode not in ("exact", "table-approx"):
            raise ValueError(f"unknown hw_mode {self.hw_mode!r}")
        num, den = float(self.tau).as_integer_ratio()
        self.tau_num = num
        self.tau_den = den


class JobStateBlock:
    """Switch-resident per-job tracking state.

    ``psn_rec`` is the marking reference; ``psn_win`` accumulates the max
    PSN seen in the current window. On a window roll the reference is
    replaced by the accumulator (two-slot rolling max), so a stale
    high-water mark from a brief burst ages out within two windows while
    in-window updates still take effect immediately.
    """

    __slots__ = ("step_min", "psn_rec", "psn_win", "alpha",
                 "cnt_total", "cnt_op", "window_start")

    def __init__(self, window_start: int = 0):
        self.step_min = 0
        self.psn_rec = 0
        self.psn_win = 0
        self.alpha = 1
        self.cnt_total = 0
        self.cnt_op = 0
        self.window_start = window_start

    def snapshot(self) -> tuple[int, int, int, int, int, int]:
        return (self.step_min, self.psn_rec, self.psn_win, self.alpha,
                self.cnt_total, self.cnt_op)

    def __repr__(self) -> str:  # debugging aid
        return (f"JobStateBlock(step_min={self.step_min}, psn_rec={self.psn_rec}, "
                f"psn_win={self.psn_win}, alpha={self.alpha}, "
                f"cnt={self.cnt_op}/{self.cnt_total})")


class MarkDecision(NamedTuple):
    mark: bool
    delta: float
    probability: float
    classified_as: str


_LAGGING_DECISION = MarkDecision(False, 0.0, 0.0, LAGGING)
_WARMUP_DECISION = MarkDecision(False, 0.0, 0.0, WARMUP)


def progress_gap(alpha: int, psn: int, psn_rec: int) -> float:
    """Severity of an outpacing packet relative to the lagging step's head."""
    return alpha * psn / psn_rec


def marking_probability(delta: float, k: float) -> float:
    p = k * delta
    return 1.0 if p > 1.0 else p


def outpacing_check(cnt_op: int, cnt_total: int, tau: float) -> bool:
    """True iff cnt_op / cnt_total >= tau, computed without division."""
    num, den = float(tau).as_integer_ratio()
    return cnt_op * den >= num * cnt_total


def hw_marking_probability(delta: float, k: float) -> float:
    """Lookup-table approximation of ``min(1, k * delta)``.

    The gap is quantized to quarter-octave levels (exponent plus two mantissa
    bits), the resolution of a small log-indexed table; relative error stays
    below 12.5% of the exact value, and the 0 and saturation cases are exact.
    """
    if delta <= 0.0:
        return 0.0
    if k * delta >= 1.0:
        return 1.0
    m, e = math.frexp(delta)          # delta = m * 2**e, m in [0.5, 1)
    j = int((m - 0.5) * 8.0)
    if j > 3:
        j = 3
    quantized = (0.5 + (j + 0.5) * 0.125) * math.ldexp(1.0, e)
    p = k * quantized
    return 1.0 if p > 1.0 else p


def process_packet(state: JobStateBlock, step: int, psn: int, is_last: bool,
                   params: TrackerParams, rng) -> MarkDecision:
    """Per-dequeued-packet tracking update and marking decision.

    Order matters: the traffic counters classify against ``step_min`` as of
    packet arrival, then the state transition runs, then the decision reads
    the updated state. All updates are value assignments, so duplicates of a
    non-LAST packet are idempotent.
    """
    state.cnt_total += 1
    if step > state.step_min:
        state.cnt_op += 1

    if is_last:
        # Optimistic advancement: assume the collective moved on.
        state.step_min = step + 1
        state.psn_rec = 0
        state.psn_win = 0
    elif step < state.step_min:
        # Lazy correction: an older step is still alive.
        state.step_min = step
        state.psn_rec = psn
        state.psn_win = psn
    elif step == state.step_min:
        if psn > state.psn_rec:
            state.psn_rec = psn
        if psn > state.psn_win:
            state.psn_win = psn

    if step <= state.step_min:
        return _LAGGING_DECISION
    if state.psn_rec <= params.n_warmup:
        return _WARMUP_DECISION

    delta = state.alpha * psn / state.psn_rec
    if params.hw_mode == "exact":
        p = params.k * delta
        if p > 1.0:
            p = 1.0
    else:
        p = hw_marking_probability(delta, params.k)
    return MarkDecision(rng.uniform01() < p, delta, p, OUTPACING)


def window_tick(state: JobStateBlock, params: TrackerParams, now: int) -> None:
    """End-of-window update: adapt alpha, reset counters, roll the PSN slots.

    The alpha step is skipped entirely when the window carried too few
    packets to be meaningful (sample guard).
    """
    if state.cnt_total > params.n_sample:
        if state.cnt_op * params.tau_den >= params.tau_num * state.cnt_total:
            state.alpha = state.alpha + 1
        else:
            state.alpha = max(1, state.alpha - 1)
    state.cnt_total = 0
    state.cnt_op = 0
    state.psn_rec = state.psn_win
    state.psn_win = 0
    state.window_start = now


def state_footprint_bytes(n_jobs: int) -> int:
    """Hardware register budget for a job table of the given size.

    Models the packed per-job layout a switch pipeline would allocate:
    step_min (4 B), psn_rec + window slot (8 B), alpha (2 B), two packet
    counters (8 B), window timestamp (4 B).
    """
    return n_jobs * (4 + 8 + 2 + 8 + 4)


class SwitchTracker:
    """Job table plus the marking gate for one switch (or one egress port).

    ``marking`` distinguishes full operation from tracking-only mode (the
    strict-priority baseline needs step_min but must not mark). The
    ``active_from``/``active_until`` window supports late activation and
    mid-run disablement; outside the window the tracker is a pure
    pass-through and its state stays frozen, which is the fail-safe
    behavior: with the mechanism off, marking degenerates to plain RED.
    """

    __slots__ = ("params", "name", "blocks", "marking", "active_from",
                 "active_until", "mark_stream", "decision_log", "trajectory_log")

    def __init__(self, params: TrackerParams, name: str, mark_stream,
                 marking: bool = True, active_from: int = 0,
                 active_until: int | None = None):
        self.params = params
        self.name = name
        self.blocks: dict[int, JobStateBlock] = {}
        self.marking = marking
        self.active_from = active_from
        self.active_until = active_until if active_until is not None else (1 << 62)
        self.mark_stream = mark_stream
        # Optional telemetry hooks, normally None (hot path stays lean).
        self.decision_log: list[tuple] | None = None
        self.trajectory_log: dict[int, list[tuple]] | None = None

    def register_job(self, job_id: int, now: int = 0) -> JobStateBlock:
        block = JobStateBlock(window_start=now)
        self.blocks[job_id] = block
        return block

    def lookup(self, job_id: int) -> JobStateBlock | None:
        """Job table lookup; unknown ids mean non-collective traffic."""
        return self.blocks.get(job_id)

    def roll_windows(self, block: JobStateBlock, now: int) -> None:
        """Apply every window boundary between block.window_start and now.

        Boundaries stay on the block's own t_win grid, so a job's block
        evolves identically whether its packets were interleaved with other
        jobs' or replayed alone. Long silent gaps shortcut after the two
        rolls that zero both PSN slots, because further empty windows only
        move the timestamp.
        """
        t_win = self.params.t_win
        start = block.window_start
        pending = (now - start) // t_win
        if pending <= 0:
            return
        rolled = 0
        while rolled < pending:
            if (rolled >= 2 and block.cnt_total == 0
                    and block.psn_rec == 0 and block.psn_win == 0):
                block.window_start = start + pending * t_win
                return
            rolled += 1
            window_tick(block, self.params, start + rolled * t_win)

    def on_dequeue(self, job_id: int, step: int, psn: int, is_last: bool,
                   now: int) -> bool:
        """Returns True when this packet should be ECN-marked by the tracker."""
        block = self.blocks.get(job_id)
        if block is None:
            return False
        if now < self.active_from or now >= self.active_until:
            return False
        self.roll_windows(block, now)
        decision = process_packet(block, step, psn, is_last, self.params,
                                  self.mark_stream)
        if self.trajectory_log is not None:
            self.trajectory_log.setdefault(job_id, []).append(
                (now, step, psn, is_last, block.snapshot()))
        mark = decision.mark and self.marking
        if self.decision_log is not None:
            self.decision_log.append(
                (now, self.name, job_id, step, psn, block.step_min,
                 block.psn_rec, block.alpha, decision.delta,
                 decision.probability, int(mark)))
        return mark
