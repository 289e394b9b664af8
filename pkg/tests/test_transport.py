"""Host transport: packetization, DCQCN reactions, CNP pacing, recovery."""
from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ringsim.transport import (DcqcnParams, FlowSpec, RateState,
                               decay_cc_alpha, on_cnp, packet_count,
                               rate_increase_tick)

LINK = 10_000_000_000


def test_packetization_arithmetic():
    assert packet_count(1024 * 1024, 1024) == 1024
    assert packet_count(1, 1024) == 1
    assert packet_count(1025, 1024) == 2


def test_flow_spec_validation():
    with pytest.raises(ValueError):
        FlowSpec(0, 0, 0, 0, src=0, dst=1, nbytes=0)


def test_cnp_reaction_formula():
    p = DcqcnParams()
    state = RateState(LINK)
    on_cnp(state, p, now=0)
    assert state.cc_alpha == pytest.approx(1 / 256)
    assert state.target_rate == LINK
    assert state.current_rate == pytest.approx(LINK * (1 - 1 / 512))
    assert state.current_rate / 1e9 == pytest.approx(9.98, abs=0.01)


def test_cnp_respects_rate_floor():
    p = DcqcnParams()
    state = RateState(LINK)
    state.current_rate = float(p.rate_min)
    state.cc_alpha = 1.0
    on_cnp(state, p, now=0)
    assert state.current_rate == p.rate_min


def test_twenty_cnps_match_hand_iterated_recurrence():
    p = DcqcnParams()
    state = RateState(LINK)
    alpha, rate = 0.0, float(LINK)
    for i in range(20):
        on_cnp(state, p, now=i)
        alpha = (1 - p.g) * alpha + p.g
        rate = max(p.rate_min, rate * (1 - alpha / 2))
        assert state.cc_alpha == pytest.approx(alpha)
        assert state.current_rate == pytest.approx(rate)


def test_fast_recovery_midpoint():
    p = DcqcnParams()
    state = RateState(LINK)
    state.current_rate = 5e9
    state.target_rate = 9e9
    state.recovery_ticks = 0
    rate_increase_tick(state, p, LINK)
    assert state.current_rate == pytest.approx(7e9)


def test_additive_phase_clamps_at_link_rate():
    p = DcqcnParams()
    state = RateState(LINK)
    state.recovery_ticks = p.fast_recovery_ticks  # past fast recovery
    state.current_rate = float(LINK)
    state.target_rate = float(LINK)
    rate_increase_tick(state, p, LINK)
    assert state.current_rate == LINK


def test_quiet_period_recovers_monotonically():
    p = DcqcnParams()
    state = RateState(LINK)
    state.current_rate = 1e9
    state.target_rate = 1e9
    # 10 ms without CNPs: one tick per timer period
    trace = []
    for _ in range(10_000_000 // p.rate_timer_period):
        decay_cc_alpha(state, p)
        rate_increase_tick(state, p, LINK)
        trace.append(state.current_rate)
    assert all(b >= a for a, b in zip(trace, trace[1:]))
    assert trace[-1] > 5e9


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from(["cnp", "tick", "decay"]), max_size=300))
def test_rate_and_alpha_bounds_hold(ops):
    p = DcqcnParams()
    state = RateState(LINK)
    for i, op in enumerate(ops):
        if op == "cnp":
            on_cnp(state, p, now=i)
        elif op == "tick":
            rate_increase_tick(state, p, LINK)
        else:
            decay_cc_alpha(state, p)
        assert 0.0 <= state.cc_alpha <= 1.0
        assert p.rate_min <= state.current_rate <= LINK
