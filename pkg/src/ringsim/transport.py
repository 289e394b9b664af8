"""Host/NIC model pieces: packetization, flow specs, DCQCN-style rate control.

A flow is the transfer one ring member performs for one step. Flows
packetize into MTU-sized packets carrying (job, ring, step, psn, LAST);
receivers echo congestion notification packets (CNPs) for CE-marked
arrivals at most once per interval, and the sender's rate state reacts with
multiplicative decrease plus timer-driven fast recovery / additive increase.
"""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class FlowSpec:
    """One step-transfer between ring neighbors, with its start dependency."""

    flow_id: int
    job_id: int
    ring_id: int
    step: int                 # global step index (continues across passes)
    src: int                  # host index
    dst: int
    nbytes: int
    depends_on: tuple[int, ...] = ()
    pass_idx: int = 0
    step_in_pass: int = 0

    def __post_init__(self) -> None:
        if self.nbytes <= 0:
            raise ValueError(f"flow {self.flow_id}: nbytes must be > 0")


@dataclass(frozen=True)
class DcqcnParams:
    """Rate-control constants (conventional values scaled for 10G links)."""

    g: float = 1.0 / 256.0
    cnp_interval: int = 50_000         # ns, per-flow CNP rate limit
    alpha_decay_period: int = 55_000   # ns without CNP before cc_alpha decays
    rate_timer_period: int = 55_000    # ns between rate-increase ticks
    fast_recovery_ticks: int = 5
    rate_ai: int = 40_000_000          # additive increase, bits/s per tick
    rate_min: int = 10_000_000         # bits/s floor
    mtu: int = 1024                    # payload bytes per packet
    byte_counter_threshold: int = 0    # bytes per extra increase tick; 0 = off
    retransmit_timeout: int = 1_000_000  # ns; used only under fault injection


class RateState:
    """DCQCN sender state for one ring channel (persistent across steps)."""

    __slots__ = ("current_rate", "target_rate", "cc_alpha", "byte_counter",
                 "recovery_ticks", "last_cnp_at")

    def __init__(self, link_rate: int):
        self.current_rate: float = float(link_rate)
        self.target_rate: float = float(link_rate)
        self.cc_alpha: float = 0.0
        self.byte_counter = 0
        self.recovery_ticks = 0
        self.last_cnp_at = -(1 << 62)


def on_cnp(state: RateState, params: DcqcnParams, now: int = 0) -> None:
    """Multiplicative decrease on a congestion notification."""
    state.cc_alpha = (1.0 - params.g) * state.cc_alpha + params.g
    state.target_rate = state.current_rate
    cut = state.current_rate * (1.0 - state.cc_alpha / 2.0)
    state.current_rate = cut if cut > params.rate_min else float(params.rate_min)
    state.recovery_ticks = 0
    state.byte_counter = 0
    state.last_cnp_at = now


def rate_increase_tick(state: RateState, params: DcqcnParams,
                       link_rate: int) -> None:
    """One recovery step: fast recovery midpoints, then additive increase."""
    state.recovery_ticks += 1
    if state.recovery_ticks <= params.fast_recovery_ticks:
        state.current_rate = (state.current_rate + state.target_rate) / 2.0
    else:
        nxt = state.current_rate + params.rate_ai
        state.current_rate = nxt if nxt < link_rate else float(link_rate)


def decay_cc_alpha(state: RateState, params: DcqcnParams) -> None:
    state.cc_alpha *= 1.0 - params.g


def packet_count(nbytes: int, mtu: int) -> int:
    """Packets needed for a message; header overhead is ignored."""
    return -(-nbytes // mtu)


class Packet:
    """The unit of simulated transmission.

    Static flow metadata lives on ``flow`` (a runtime flow object exposing
    job_id/ring_id/step); per-packet state is the PSN, LAST flag, the RED
    coin recorded at enqueue, and the cumulative CE bit.
    """

    __slots__ = ("flow", "psn", "size", "last", "red_mark", "ce", "hop",
                 "path", "priority")

    def __init__(self, flow, psn: int, size: int, last: bool, path):
        self.flow = flow
        self.psn = psn
        self.size = size
        self.last = last
        self.red_mark = False
        self.ce = False
        self.hop = 0
        self.path = path
        self.priority = 0

    @property
    def job_id(self):
        return self.flow.job_id

    @property
    def ring_id(self):
        return self.flow.ring_id

    @property
    def step(self):
        return self.flow.step

    def __repr__(self) -> str:
        return (f"Packet(job={self.flow.job_id}, step={self.flow.step}, "
                f"psn={self.psn}{', LAST' if self.last else ''})")
