"""Evaluation metrics computed from run telemetry, plus the CSV schemas.

Step overlap counts the distinct step indices of a job with at least one
packet in flight or queued in the fabric at a sample instant (data sitting
in host send queues is invisible to switches and does not count). Completion
times: a pass's CCT spans its first flow activation to its last delivery;
JCT spans job start to last delivery.

CSV files written per run directory:
    overlap.csv   run_id, job_id, t_ns, overlap
    steps.csv     run_id, job_id, pass, step, complete_t_ns
    summary.csv   run_id, job_id, cct_ns, jct_ns, max_overlap,
                  final_step_span_ns, red_marks, symphony_marks
    decisions.csv t_ns, switch_id, job_id, step, psn, step_min, psn_rec,
                  alpha, delta, p, marked                        (optional)
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .simulation import JobResult, RunResult


class IncompleteJobError(RuntimeError):
    """A completion-time metric was requested for an unfinished job."""


@dataclass
class MetricSeries:
    kind: str
    job_id: int
    samples: list[tuple[int, float]]

    def __post_init__(self) -> None:
        for a, b in zip(self.samples, self.samples[1:]):
            if b[0] <= a[0]:
                raise ValueError(f"{self.kind}: sample times must strictly increase")

    def values(self) -> list[float]:
        return [v for _, v in self.samples]

    def max(self) -> float:
        return max((v for _, v in self.samples), default=0.0)


@dataclass
class RunSummary:
    run_id: str
    job_id: int
    cct_ns: int
    pass_ccts: tuple[int, ...]
    jct_ns: int
    max_overlap: int
    final_step_span_ns: int
    red_marks: int
    symphony_marks: int


def step_overlap(job: JobResult, sample_interval: int | None = None) -> MetricSeries:
    """Overlap timeline as sampled during the run.

    ``sample_interval`` optionally thins the stored series to a coarser
    grid; it cannot refine below the recording interval.
    """
    samples = [(t, float(v)) for t, v in job.overlap_samples]
    if sample_interval is not None and len(samples) > 1:
        recorded = samples[1][0] - samples[0][0]
        if sample_interval > recorded:
            stride = max(1, sample_interval // recorded)
            samples = samples[::stride]
    return MetricSeries("step_overlap", job.job_id, samples)


def overlap_from_packet_events(events, job_id: int,
                               sample_interval: int, t_end: int,
                               t_start: int = 0) -> MetricSeries:
    """Reconstruct the overlap series from a raw packet enter/exit log.

    Independent of the live counter: replays the log and counts distinct
    steps with nonzero population at each sample instant.
    """
    deltas = []
    for kind, t, jid, step, _fid, _psn in events:
        if jid != job_id:
            continue
        deltas.append((t, step, 1 if kind == "enter" else -1))
    deltas.sort(key=lambda e: e[0])
    # The live sampler's event is queued a full interval ahead of each tick,
    # so packet events landing exactly on a tick dispatch after it: strict <.
    samples: list[tuple[int, float]] = []
    population: dict[int, int] = {}
    i = 0
    t = t_start
    while t <= t_end:
        while i < len(deltas) and deltas[i][0] < t:
            _, step, d = deltas[i]
            population[step] = population.get(step, 0) + d
            if population[step] == 0:
                del population[step]
            i += 1
        samples.append((t, float(len(population))))
        t += sample_interval
    return MetricSeries("step_overlap", job_id, samples)


def theoretical_step_time(job: JobResult) -> int:
    """Lockstep duration of one step: one chunk at full link rate, ns."""
    return job.chunk_bytes * 8 * 1_000_000_000 // job.link_rate


def step_completion_rate(job: JobResult) -> MetricSeries:
    """Inverse inter-step completion intervals, normalized to lockstep rate."""
    events = sorted(t for t, _p, _s, _g in job.step_completions)
    if len(events) < 2:
        raise ValueError("need at least two step completions")
    theo = theoretical_step_time(job)
    samples = []
    for prev, cur in zip(events, events[1:]):
        if cur == prev:
            continue
        samples.append((cur, theo / (cur - prev)))
    return MetricSeries("step_completion_rate", job.job_id, samples)


def collective_completion_time(job: JobResult, pass_idx: int) -> int:
    if pass_idx >= len(job.pass_ccts):
        raise IncompleteJobError(
            f"job {job.job_id}: pass {pass_idx} did not complete")
    return job.pass_ccts[pass_idx]


def job_completion_time(job: JobResult) -> int:
    if not job.completed or job.jct is None:
        raise IncompleteJobError(f"job {job.job_id} did not complete")
    return job.jct


def final_step_span(job: JobResult) -> int:
    if job.final_step_span is None:
        raise IncompleteJobError(
            f"job {job.job_id}: final step flows not all delivered")
    return job.final_step_span


def mean_cct(job: JobResult) -> int:
    if not job.pass_ccts or len(job.pass_ccts) < job.passes:
        raise IncompleteJobError(f"job {job.job_id}: not every pass completed")
    return sum(job.pass_ccts) // len(job.pass_ccts)


def summarize(run_id: str, job: JobResult) -> RunSummary:
    return RunSummary(
        run_id=run_id,
        job_id=job.job_id,
        cct_ns=mean_cct(job),
        pass_ccts=tuple(job.pass_ccts),
        jct_ns=job_completion_time(job),
        max_overlap=job.max_overlap,
        final_step_span_ns=final_step_span(job),
        red_marks=job.red_marks,
        symphony_marks=job.symphony_marks,
    )


# ---------------------------------------------------------------------------
# CSV writers / readers


def write_overlap_csv(path: Path, runs: list[tuple[str, RunResult]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run_id", "job_id", "t_ns", "overlap"])
        for run_id, result in runs:
            for job in result.jobs:
                for t, v in job.overlap_samples:
                    w.writerow([run_id, job.job_id, t, v])


def write_steps_csv(path: Path, runs: list[tuple[str, RunResult]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run_id", "job_id", "pass", "step", "complete_t_ns"])
        for run_id, result in runs:
            for job in result.jobs:
                for t, pass_idx, step_in_pass, _gstep in job.step_completions:
                    w.writerow([run_id, job.job_id, pass_idx, step_in_pass, t])


def write_summary_csv(path: Path, rows: list[RunSummary]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run_id", "job_id", "cct_ns", "jct_ns", "max_overlap",
                    "final_step_span_ns", "red_marks", "symphony_marks"])
        for r in rows:
            w.writerow([r.run_id, r.job_id, r.cct_ns, r.jct_ns, r.max_overlap,
                        r.final_step_span_ns, r.red_marks, r.symphony_marks])


def write_decisions_csv(path: Path, runs: list[tuple[str, RunResult]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run_id", "t_ns", "switch_id", "job_id", "step", "psn",
                    "step_min", "psn_rec", "alpha", "delta", "p", "marked"])
        for run_id, result in runs:
            if not result.decisions:
                continue
            for row in result.decisions:
                (t, switch, job_id, step, psn, step_min, psn_rec, alpha,
                 delta, p, marked) = row
                w.writerow([run_id, t, switch, job_id, step, psn, step_min,
                            psn_rec, alpha, f"{delta:.9g}", f"{p:.9g}", marked])


def read_summary_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = []
        for row in csv.DictReader(fh):
            rows.append({
                "run_id": row["run_id"],
                "job_id": int(row["job_id"]),
                "cct_ns": int(row["cct_ns"]),
                "jct_ns": int(row["jct_ns"]),
                "max_overlap": int(row["max_overlap"]),
                "final_step_span_ns": int(row["final_step_span_ns"]),
                "red_marks": int(row["red_marks"]),
                "symphony_marks": int(row["symphony_marks"]),
            })
        return rows


def read_overlap_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{"run_id": r["run_id"], "job_id": int(r["job_id"]),
                 "t_ns": int(r["t_ns"]), "overlap": int(r["overlap"])}
                for r in csv.DictReader(fh)]


def percentile(values, q: float) -> float:
    """Nearest-rank percentile on a sorted copy; q in [0, 100]."""
    if not values:
        raise ValueError("no values")
    ordered = sorted(values)
    if len(ordered) == 1:
        return float(ordered[0])
    pos = (len(ordered) - 1) * q / 100.0
    lo = int(pos)
    hi = min(lo + 1, len(ordered) - 1)
    frac = pos - lo
    return ordered[lo] * (1 - frac) + ordered[hi] * frac


def median(values) -> float:
    return percentile(values, 50.0)
