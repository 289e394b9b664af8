"""Tracker unit tests: per-packet rules, window updates, guards, job table."""
from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ringsim.progress import (JobStateBlock, MarkDecision, SwitchTracker,
                              TrackerParams, hw_marking_probability,
                              marking_probability, outpacing_check,
                              process_packet, progress_gap,
                              state_footprint_bytes, window_tick)


class FixedDraws:
    """Scripted uniform01 source; complains when drawn dry."""

    def __init__(self, values=()):
        self.values = list(values)

    def uniform01(self):
        return self.values.pop(0)


def make_state(step_min=0, psn_rec=0, alpha=1, psn_win=None):
    st_ = JobStateBlock()
    st_.step_min = step_min
    st_.psn_rec = psn_rec
    st_.psn_win = psn_rec if psn_win is None else psn_win
    st_.alpha = alpha
    return st_


# -- process_packet ---------------------------------------------------------


def test_last_packet_advances_step_min_and_clears_psn():
    state = make_state(step_min=5, psn_rec=900)
    decision = process_packet(state, 5, 1024, True, TrackerParams(), FixedDraws())
    assert state.step_min == 6
    assert state.psn_rec == 0
    assert not decision.mark
    assert decision.classified_as == "lagging"


def test_older_step_triggers_immediate_downward_correction():
    state = make_state(step_min=5, psn_rec=700)
    decision = process_packet(state, 3, 42, False, TrackerParams(), FixedDraws())
    assert state.step_min == 3
    assert state.psn_rec == 42
    assert not decision.mark


def test_outpacing_gap_and_probability():
    state = make_state(step_min=5, psn_rec=200, alpha=2)
    decision = process_packet(state, 6, 400, False, TrackerParams(k=0.01),
                              FixedDraws([0.999]))
    assert decision.classified_as == "outpacing"
    assert decision.delta == pytest.approx(4.0)
    assert decision.probability == pytest.approx(0.04)
    assert not decision.mark  # 0.999 >= 0.04


def test_warmup_guard_blocks_marking():
    state = make_state(step_min=5, psn_rec=50)
    decision = process_packet(state, 6, 400, False,
                              TrackerParams(n_warmup=100), FixedDraws())
    assert decision.classified_as == "warmup"
    assert not decision.mark


def test_equal_step_updates_reference_max():
    state = make_state(step_min=4, psn_rec=100)
    process_packet(state, 4, 250, False, TrackerParams(), FixedDraws())
    assert state.psn_rec == 250
    process_packet(state, 4, 80, False, TrackerParams(), FixedDraws())
    assert state.psn_rec == 250


def test_counters_classify_before_state_transition():
    # A LAST packet of an outpacing step counts as outpacing traffic even
    # though the transition then lifts step_min past it.
    state = make_state(step_min=5, psn_rec=500)
    process_packet(state, 7, 1024, True, TrackerParams(), FixedDraws())
    assert state.cnt_op == 1
    assert state.cnt_total == 1
    assert state.step_min == 8


def test_duplicate_non_last_packet_is_idempotent():
    state = make_state(step_min=4, psn_rec=100)
    params = TrackerParams()
    process_packet(state, 4, 90, False, params, FixedDraws())
    snap = (state.step_min, state.psn_rec, state.psn_win)
    process_packet(state, 4, 90, False, params, FixedDraws())
    assert (state.step_min, state.psn_rec, state.psn_win) == snap
    assert state.cnt_total == 2  # counters track volume, not distinct packets


def test_mark_uses_coin():
    state = make_state(step_min=5, psn_rec=200, alpha=2)
    params = TrackerParams(k=0.01)
    hit = process_packet(state, 6, 400, False, params, FixedDraws([0.039]))
    assert hit.mark
    state2 = make_state(step_min=5, psn_rec=200, alpha=2)
    miss = process_packet(state2, 6, 400, False, params, FixedDraws([0.041]))
    assert not miss.mark


# -- equations --------------------------------------------------------------


def test_progress_gap_identity_and_substitution():
    assert progress_gap(1, 300, 300) == pytest.approx(1.0)
    assert progress_gap(3, 100, 50) == pytest.approx(6.0)


def test_progress_gap_monotonicity_sweep():
    rng = random.Random(11)
    for _ in range(1000):
        alpha = rng.randint(1, 50)
        psn = rng.randint(1, 10_000)
        rec = rng.randint(1, 10_000)
        base = progress_gap(alpha, psn, rec)
        assert progress_gap(alpha + 1, psn, rec) > base
        assert progress_gap(alpha, psn + 1, rec) > base
        assert progress_gap(alpha, psn, rec + 1) < base


def test_marking_probability_cases():
    assert marking_probability(0.0, 0.01) == 0.0
    assert marking_probability(200.0, 0.01) == 1.0
    assert marking_probability(4.0, 0.01) == pytest.approx(0.04)


def test_outpacing_check_examples():
    assert outpacing_check(30, 100, 0.25)
    assert not outpacing_check(24, 100, 0.25)
    assert outpacing_check(25, 100, 0.25)  # boundary: 25 >= 25


# -- window update ----------------------------------------------------------


def test_window_tick_increments_alpha():
    state = make_state()
    state.cnt_total, state.cnt_op = 1000, 300
    window_tick(state, TrackerParams(tau=0.25, n_sample=50), now=100_000)
    assert state.alpha == 2
    assert state.cnt_total == 0 and state.cnt_op == 0
    assert state.window_start == 100_000


def test_window_tick_alpha_floor():
    state = make_state()
    state.cnt_total, state.cnt_op = 1000, 100
    window_tick(state, TrackerParams(), now=100_000)
    assert state.alpha == 1


def test_window_tick_sample_guard():
    state = make_state(alpha=3)
    state.cnt_total, state.cnt_op = 10, 10  # ratio 1.0 but too few samples
    window_tick(state, TrackerParams(n_sample=50), now=100_000)
    assert state.alpha == 3


def test_sustained_outpacing_ramps_alpha():
    state = make_state()
    params = TrackerParams()
    for w in range(1, 11):
        state.cnt_total, state.cnt_op = 1000, 1000
        window_tick(state, params, now=w * params.t_win)
    assert state.alpha == 11


def test_window_roll_replaces_reference_with_current_max():
    state = make_state(step_min=2, psn_rec=900, psn_win=0)
    params = TrackerParams()
    # A stale high reference decays once the window with newer, lower
    # activity rolls over.
    process_packet(state, 2, 120, False, params, FixedDraws())
    assert state.psn_rec == 900
    window_tick(state, params, now=params.t_win)
    assert state.psn_rec == 120
    window_tick(state, params, now=2 * params.t_win)
    assert state.psn_rec == 0


# -- hardware-friendly variants ---------------------------------------------


def test_hw_probability_zero_and_saturation_exact():
    assert hw_marking_probability(0.0, 0.01) == 0.0
    assert hw_marking_probability(100.0, 0.01) == 1.0
    assert hw_marking_probability(250.0, 0.01) == 1.0


def test_hw_probability_relative_error_bound():
    k = 0.01
    delta = 1e-3 / k
    worst = 0.0
    while delta < 1.0 / k:
        exact = marking_probability(delta, k)
        approx = hw_marking_probability(delta, k)
        if exact > 0:
            worst = max(worst, abs(approx - exact) / exact)
        delta *= 1.01
    assert worst <= 0.25


def test_outpacing_check_division_free_matches_float_on_samples():
    rng = random.Random(5)
    for _ in range(20_000):
        total = rng.randint(1, 4096)
        op = rng.randint(0, 4096)
        assert outpacing_check(op, total, 0.25) == (op / total >= 0.25)


# -- invariants (property tests) --------------------------------------------


@settings(max_examples=300, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 30), st.integers(1, 5000),
                          st.booleans(), st.floats(0, 0.999)),
                min_size=1, max_size=200))
def test_step_min_packets_never_marked_and_alpha_floor(trace):
    state = JobStateBlock()
    params = TrackerParams()
    draws = FixedDraws()
    for i, (step, psn, last, u) in enumerate(trace):
        draws.values.append(u)
        decision = process_packet(state, step, psn, last, params, draws)
        draws.values.clear()
        if decision.mark:
            assert step > state.step_min
        assert decision.probability <= 1.0
        if decision.classified_as != "outpacing":
            assert not decision.mark and decision.probability == 0.0
        if i % 17 == 0:
            window_tick(state, params, now=i)
        assert state.alpha >= 1
        assert state.cnt_op <= state.cnt_total


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 50), st.integers(0, 40), st.integers(1, 5000))
def test_lazy_correction_is_immediate(step_min, step, psn):
    state = make_state(step_min=step_min, psn_rec=123)
    process_packet(state, step, psn, False, TrackerParams(), FixedDraws([0.5]))
    if step < step_min:
        assert state.step_min == step
        assert state.psn_rec == psn


# -- job table ---------------------------------------------------------------


def test_unknown_job_is_pass_through():
    tracker = SwitchTracker(TrackerParams(), "tor0", FixedDraws())
    assert tracker.on_dequeue(404, 7, 100, False, now=0) is False
    assert tracker.lookup(404) is None


def test_job_isolation_under_interleaving():
    params = TrackerParams()
    rng = random.Random(2)
    traffic = []
    for i in range(4000):
        job = rng.choice((1, 2))
        traffic.append((job, rng.randint(0, 12), rng.randint(1, 2000),
                        rng.random() < 0.03, i * 997))

    interleaved = SwitchTracker(params, "sw", FixedDraws())
    interleaved.register_job(1, 0)
    interleaved.register_job(2, 0)
    trajectories = {1: [], 2: []}
    for job, step, psn, last, now in traffic:
        block = interleaved.blocks[job]
        interleaved.roll_windows(block, now)
        process_packet(block, step, psn, last, params, FixedDraws([0.5]))
        trajectories[job].append(block.snapshot())

    for job in (1, 2):
        solo = SwitchTracker(params, "sw", FixedDraws())
        solo.register_job(job, 0)
        block = solo.blocks[job]
        replay = []
        for j, step, psn, last, now in traffic:
            if j != job:
                continue
            solo.roll_windows(block, now)
            process_packet(block, step, psn, last, params, FixedDraws([0.5]))
            replay.append(block.snapshot())
        assert replay == trajectories[job]


def test_tracker_inactive_window_freezes_state():
    tracker = SwitchTracker(TrackerParams(), "tor0", FixedDraws(),
                            active_from=1_000, active_until=2_000)
    block = tracker.register_job(1, 0)
    assert tracker.on_dequeue(1, 3, 10, False, now=500) is False
    assert block.cnt_total == 0
    tracker.on_dequeue(1, 3, 10, False, now=1_500)
    assert block.cnt_total == 1
    assert tracker.on_dequeue(1, 4, 10, False, now=2_500) is False
    assert block.cnt_total == 1


def test_state_footprint_scales_to_16k_jobs():
    assert state_footprint_bytes(16_384) <= 512 * 1024


def test_silent_gap_window_shortcut_matches_explicit_rolls():
    params = TrackerParams()
    a = SwitchTracker(params, "a", FixedDraws())
    block_a = a.register_job(1, 0)
    process_packet(block_a, 0, 500, False, params, FixedDraws())
    a.roll_windows(block_a, 50 * params.t_win)

    b = SwitchTracker(params, "b", FixedDraws())
    block_b = b.register_job(1, 0)
    process_packet(block_b, 0, 500, False, params, FixedDraws())
    for w in range(1, 51):
        window_tick(block_b, params, now=w * params.t_win)
    assert block_a.snapshot() == block_b.snapshot()
    assert block_a.window_start == block_b.window_start
