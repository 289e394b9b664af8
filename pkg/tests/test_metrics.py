"""Metric computations and CSV schema round-trips."""
from __future__ import annotations

import pytest

from ringsim.metrics import (IncompleteJobError, MetricSeries,
                             collective_completion_time, final_step_span,
                             job_completion_time, mean_cct, median,
                             overlap_from_packet_events, percentile,
                             read_overlap_csv, read_summary_csv,
                             step_completion_rate, step_overlap, summarize,
                             write_overlap_csv, write_steps_csv,
                             write_summary_csv)
from ringsim.simulation import JobResult, RunResult


def make_job(**kw) -> JobResult:
    defaults = dict(
        job_id=0, start_at=0, completed=True, jct=10_000_000,
        pass_ccts=[4_000_000, 6_000_000], max_overlap=3,
        final_step_span=5_000_000, red_marks=10, symphony_marks=2,
        overlap_samples=[(0, 0), (100_000, 2), (200_000, 3)],
        step_completions=[(800_000, 0, 0, 0), (1_600_000, 0, 1, 1),
                          (3_200_000, 0, 2, 2)],
        chunk_bytes=1_000_000, steps_per_pass=6, passes=2,
        link_rate=10_000_000_000)
    defaults.update(kw)
    return JobResult(**defaults)


def test_metric_series_requires_increasing_times():
    with pytest.raises(ValueError):
        MetricSeries("x", 0, [(5, 1.0), (5, 2.0)])


def test_step_overlap_series_and_max():
    series = step_overlap(make_job())
    assert series.max() == 3
    assert series.samples[0] == (0, 0.0)


def test_overlap_reconstruction_counts_distinct_steps():
    events = [
        ("enter", 50, 0, 4, 1, 1), ("enter", 60, 0, 5, 2, 1),
        ("enter", 70, 0, 6, 3, 1), ("exit", 120, 0, 4, 1, 1),
        ("exit", 130, 0, 5, 2, 1), ("exit", 140, 0, 6, 3, 1),
    ]
    series = overlap_from_packet_events(events, job_id=0,
                                        sample_interval=100, t_end=200)
    assert [v for _, v in series.samples] == [0.0, 3.0, 0.0]


def test_step_completion_rate_normalization():
    theo = 800_000  # 1 Mbyte at 10 Gb/s
    job = make_job(step_completions=[(t * theo, 0, t, t) for t in range(1, 5)],
                   chunk_bytes=1_000_000)
    series = step_completion_rate(job)
    assert all(v == pytest.approx(1.0) for _, v in series.samples)
    doubled = make_job(
        step_completions=[(1_600_000 * t, 0, t, t) for t in range(1, 5)])
    series = step_completion_rate(doubled)
    assert all(v == pytest.approx(0.5) for _, v in series.samples)


def test_completion_time_accessors():
    job = make_job()
    assert collective_completion_time(job, 1) == 6_000_000
    assert job_completion_time(job) == 10_000_000
    assert mean_cct(job) == 5_000_000
    with pytest.raises(IncompleteJobError):
        collective_completion_time(job, 5)
    with pytest.raises(IncompleteJobError):
        job_completion_time(make_job(completed=False, jct=None))
    with pytest.raises(IncompleteJobError):
        mean_cct(make_job(pass_ccts=[4_000_000]))


def test_two_pass_jct_bounds_cct():
    job = make_job()
    assert job_completion_time(job) >= 2 * min(job.pass_ccts)


def test_final_step_span():
    flows_done = [10_000_000, 12_000_000, 15_000_000]
    job = make_job(final_step_span=max(flows_done) - min(flows_done))
    assert final_step_span(job) == 5_000_000
    assert final_step_span(make_job(final_step_span=0)) == 0
    with pytest.raises(IncompleteJobError):
        final_step_span(make_job(final_step_span=None))


def test_percentile_and_median():
    values = [1, 2, 3, 4, 5]
    assert median(values) == 3
    assert percentile(values, 0) == 1
    assert percentile(values, 100) == 5
    assert percentile([10, 20], 50) == pytest.approx(15)


def test_csv_round_trip(tmp_path):
    job = make_job()
    result = RunResult(seed=7, truncated=False, t_final=10_000_000,
                       event_count=100, jobs=[job])
    write_overlap_csv(tmp_path / "overlap.csv", [("s0007", result)])
    write_steps_csv(tmp_path / "steps.csv", [("s0007", result)])
    summary = summarize("s0007", job)
    write_summary_csv(tmp_path / "summary.csv", [summary])

    overlap = read_overlap_csv(tmp_path / "overlap.csv")
    assert overlap[1] == {"run_id": "s0007", "job_id": 0,
                          "t_ns": 100_000, "overlap": 2}
    rows = read_summary_csv(tmp_path / "summary.csv")
    assert rows == [{
        "run_id": "s0007", "job_id": 0, "cct_ns": 5_000_000,
        "jct_ns": 10_000_000, "max_overlap": 3,
        "final_step_span_ns": 5_000_000, "red_marks": 10,
        "symphony_marks": 2}]
    header = (tmp_path / "summary.csv").read_text().splitlines()[0]
    assert header == ("run_id,job_id,cct_ns,jct_ns,max_overlap,"
                      "final_step_span_ns,red_marks,symphony_marks")
    steps_header = (tmp_path / "steps.csv").read_text().splitlines()[0]
    assert steps_header == "run_id,job_id,pass,step,complete_t_ns"
