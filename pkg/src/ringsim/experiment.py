"""Scenario execution: seed fan-out, output directories, compare, sweeps.

A scenario run produces one directory holding the metric CSVs (one file per
metric, all seeds merged in seed order), a manifest attributing every run_id
to its seed and the config hash, and the fully resolved configuration for
reproduction. Comparisons pair two such directories seed by seed.
"""
from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from . import metrics
from .config import (ConfigError, ScenarioConfig, config_hash,
                     serialize_config)
from .fabric import LinkPerturbation
from .simulation import RunResult, run_simulation

WORKERS_ENV = "RINGSIM_WORKERS"


class TruncatedRunError(RuntimeError):
    """A job failed to complete before t_end; partial telemetry was written."""


class CompareError(ValueError):
    pass


def _worker_count(explicit: int | None) -> int:
    if explicit is not None:
        return max(1, explicit)
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"{WORKERS_ENV}={env!r}: expected an integer") from exc
    return min(8, os.cpu_count() or 1)


def run_id_for(seed: int) -> str:
    return f"s{seed:04d}"


def _run_one(args: tuple[ScenarioConfig, int]) -> RunResult:
    cfg, seed = args
    return run_simulation(cfg, seed)


def execute_scenario(cfg: ScenarioConfig,
                     workers: int | None = None) -> list[RunResult]:
    """One run per configured seed, merged in seed order."""
    seeds = cfg.run.seeds
    n = _worker_count(workers)
    if n > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(min(n, len(seeds))) as pool:
            return list(pool.map(_run_one, [(cfg, s) for s in seeds]))
    return [run_simulation(cfg, s) for s in seeds]


def write_outputs(cfg: ScenarioConfig, results: list[RunResult],
                  outdir: str | Path) -> list[metrics.RunSummary]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    tagged = [(run_id_for(r.seed), r) for r in results]
    truncated = [rid for rid, r in tagged if r.truncated]

    metrics.write_overlap_csv(outdir / "overlap.csv", tagged)
    metrics.write_steps_csv(outdir / "steps.csv", tagged)
    summaries = []
    for rid, result in tagged:
        if result.truncated:
            continue
        for job in result.jobs:
            summaries.append(metrics.summarize(rid, job))
    metrics.write_summary_csv(outdir / "summary.csv", summaries)
    if any(r.decisions for _, r in tagged):
        metrics.write_decisions_csv(outdir / "decisions.csv", tagged)
    (outdir / "scenario.resolved.toml").write_text(serialize_config(cfg))
    manifest = {
        "scenario": cfg.name,
        "config_hash": config_hash(cfg),
        "runs": [{"run_id": rid, "seed": r.seed, "truncated": r.truncated,
                  "events": r.event_count, "drops": r.drops,
                  "retransmissions": r.retransmissions}
                 for rid, r in tagged],
        "truncated_runs": truncated,
    }
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return summaries


def run_scenario(cfg: ScenarioConfig, outdir: str | Path,
                 workers: int | None = None) -> list[metrics.RunSummary]:
    """Execute all seeds and write the metric CSVs.

    Raises TruncatedRunError after writing partial telemetry when a run did
    not finish before t_end.
    """
    results = execute_scenario(cfg, workers)
    summaries = write_outputs(cfg, results, outdir)
    bad = [r.seed for r in results if r.truncated]
    if bad:
        raise TruncatedRunError(
            f"seeds {bad} did not complete before t_end="
            f"{cfg.run.t_end / 1e6:g} ms; partial telemetry flagged in "
            f"{Path(outdir) / 'manifest.json'}")
    return summaries


# ---------------------------------------------------------------------------
# comparison


@dataclass
class ComparisonReport:
    """Paired per-seed comparison of two scenario directories."""

    baseline_dir: str
    treatment_dir: str
    seeds: list[str]
    # metric -> {"baseline_median", "treatment_median", "improvement_median",
    #            "improvement_p10", "improvement_p90"}
    stats: dict[str, dict[str, float]]
    # metric -> list of (value, cdf_baseline, cdf_treatment) rows
    cdf_tables: dict[str, list[tuple[float, float, float]]]

    def improvement(self, metric: str) -> float:
        return self.stats[metric]["improvement_median"]


_COMPARE_METRICS = ("cct_ns", "jct_ns", "max_overlap", "final_step_span_ns")


def _cdf_table(a: list[float], b: list[float]) -> list[tuple[float, float, float]]:
    points = sorted(set(a) | set(b))
    sa, sb = sorted(a), sorted(b)
    rows = []
    import bisect
    for x in points:
        rows.append((x,
                     bisect.bisect_right(sa, x) / len(sa),
                     bisect.bisect_right(sb, x) / len(sb)))
    return rows


def compare_dirs(baseline_dir: str | Path,
                 treatment_dir: str | Path) -> ComparisonReport:
    """Pairwise per-(seed, job) deltas; positive improvement = faster/lower."""
    base = metrics.read_summary_csv(Path(baseline_dir) / "summary.csv")
    treat = metrics.read_summary_csv(Path(treatment_dir) / "summary.csv")
    index_b = {(r["run_id"], r["job_id"]): r for r in base}
    index_t = {(r["run_id"], r["job_id"]): r for r in treat}
    if set(index_b) != set(index_t):
        only_b = sorted(set(index_b) - set(index_t))
        only_t = sorted(set(index_t) - set(index_b))
        raise CompareError(
            f"seed sets differ: baseline-only={only_b[:4]} "
            f"treatment-only={only_t[:4]}")
    if not index_b:
        raise CompareError("no completed runs to compare")
    keys = sorted(index_b)
    stats: dict[str, dict[str, float]] = {}
    cdfs: dict[str, list] = {}
    for metric in _COMPARE_METRICS:
        vb = [float(index_b[k][metric]) for k in keys]
        vt = [float(index_t[k][metric]) for k in keys]
        improvements = [(b - t) / b if b else 0.0 for b, t in zip(vb, vt)]
        stats[metric] = {
            "baseline_median": metrics.median(vb),
            "treatment_median": metrics.median(vt),
            "improvement_median": metrics.median(improvements),
            "improvement_p10": metrics.percentile(improvements, 10),
            "improvement_p90": metrics.percentile(improvements, 90),
        }
        if metric in ("cct_ns", "max_overlap"):
            cdfs[metric] = _cdf_table(vb, vt)
    return ComparisonReport(
        baseline_dir=str(baseline_dir), treatment_dir=str(treatment_dir),
        seeds=[k[0] for k in keys], stats=stats, cdf_tables=cdfs)


def write_comparison(report: ComparisonReport, outdir: str | Path) -> None:
    import csv

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "comparison.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "baseline_median", "treatment_median",
                    "improvement_median", "improvement_p10", "improvement_p90"])
        for metric, st in report.stats.items():
            w.writerow([metric, f"{st['baseline_median']:.9g}",
                        f"{st['treatment_median']:.9g}",
                        f"{st['improvement_median']:.9g}",
                        f"{st['improvement_p10']:.9g}",
                        f"{st['improvement_p90']:.9g}"])
    for metric, rows in report.cdf_tables.items():
        name = "cct_cdf.csv" if metric == "cct_ns" else "overlap_cdf.csv"
        with open(outdir / name, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([metric, "cdf_baseline", "cdf_treatment"])
            for x, fa, fb in rows:
                w.writerow([f"{x:.9g}", f"{fa:.6f}", f"{fb:.6f}"])


# ---------------------------------------------------------------------------
# sweeps


def _set_sweep_value(cfg: ScenarioConfig, param: str, value: float) -> ScenarioConfig:
    if param == "k":
        params = replace(cfg.tracker.params, k=float(value))
        return replace(cfg, tracker=replace(cfg.tracker, params=params))
    if param == "t_win":
        params = replace(cfg.tracker.params, t_win=int(value))
        return replace(cfg, tracker=replace(cfg.tracker, params=params))
    if param == "n_warmup":
        params = replace(cfg.tracker.params, n_warmup=int(value))
        return replace(cfg, tracker=replace(cfg.tracker, params=params))
    if param == "chunk_bytes":
        return replace(cfg, workload=replace(cfg.workload, chunk_bytes=int(value)))
    if param == "imbalance_ratio":
        if not cfg.perturbations:
            raise ConfigError(
                "imbalance_ratio sweep needs one [[perturbations]] entry to scale")
        pert = cfg.perturbations[0]
        scaled = LinkPerturbation(pert.link, 1.0 / float(value),
                                  pert.start, pert.end)
        return replace(cfg, perturbations=(scaled,) + cfg.perturbations[1:])
    raise ConfigError(
        f"unknown sweep parameter {param!r} "
        "(valid: k, chunk_bytes, imbalance_ratio, t_win, n_warmup)")


def sweep(cfg: ScenarioConfig, param: str, values: list[float],
          outdir: str | Path, workers: int | None = None) -> list[dict]:
    """One scenario execution per value plus a joined summary table."""
    import csv

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = []
    for value in values:
        sub = _set_sweep_value(cfg, param, value)
        sub = replace(sub, name=f"{cfg.name}[{param}={value:g}]")
        subdir = outdir / f"{param}={value:g}"
        summaries = run_scenario(sub, subdir, workers)
        rows.append({
            "param": param,
            "value": value,
            "median_cct_ns": metrics.median([s.cct_ns for s in summaries]),
            "median_jct_ns": metrics.median([s.jct_ns for s in summaries]),
            "median_max_overlap": metrics.median([s.max_overlap for s in summaries]),
            "runs": len(summaries),
        })
    with open(outdir / "sweep_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["param", "value", "median_cct_ns", "median_jct_ns",
                    "median_max_overlap", "runs"])
        for r in rows:
            w.writerow([r["param"], f"{r['value']:g}",
                        f"{r['median_cct_ns']:.9g}", f"{r['median_jct_ns']:.9g}",
                        f"{r['median_max_overlap']:.9g}", r["runs"]])
    return rows
