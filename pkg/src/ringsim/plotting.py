"""Static chart rendering from run/comparison CSVs.

Charts are artifacts written next to the delimited output: the step-overlap
timeline, the max-overlap CDF, and the CCT CDF for a run directory;
baseline-vs-treatment CDF overlays for a comparison directory.
"""
from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import read_overlap_csv, read_summary_csv  # noqa: E402


def _save(fig, path: Path) -> Path:
    fig.savefig(path, dpi=130, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_overlap_timeline(run_dir: Path, outdir: Path) -> Path:
    rows = read_overlap_csv(run_dir / "overlap.csv")
    series = defaultdict(list)
    for r in rows:
        series[(r["run_id"], r["job_id"])].append((r["t_ns"], r["overlap"]))
    fig, ax = plt.subplots(figsize=(7, 3.2))
    for (run_id, job_id), pts in sorted(series.items()):
        ts = [t / 1e6 for t, _ in pts]
        vs = [v for _, v in pts]
        ax.plot(ts, vs, lw=0.8, alpha=0.6,
                label=f"{run_id}/job{job_id}" if len(series) <= 6 else None)
    ax.set_xlabel("time (ms)")
    ax.set_ylabel("step overlap")
    ax.set_title("Degree of step overlap over time")
    if len(series) <= 6:
        ax.legend(fontsize=7)
    ax.spines["right"].set_visible(False)
    ax.spines["top"].set_visible(False)
    return _save(fig, outdir / "overlap_timeline.png")


def _cdf(values):
    xs = sorted(values)
    ys = [(i + 1) / len(xs) for i in range(len(xs))]
    return xs, ys


def plot_run_cdfs(run_dir: Path, outdir: Path) -> list[Path]:
    rows = read_summary_csv(run_dir / "summary.csv")
    out = []
    if not rows:
        return out
    fig, ax = plt.subplots(figsize=(4.2, 3.2))
    xs, ys = _cdf([r["max_overlap"] for r in rows])
    ax.step(xs, ys, where="post")
    ax.set_xlabel("max step overlap")
    ax.set_ylabel("CDF")
    ax.set_title("Maximum step overlap across runs")
    out.append(_save(fig, outdir / "overlap_cdf.png"))

    fig, ax = plt.subplots(figsize=(4.2, 3.2))
    xs, ys = _cdf([r["cct_ns"] / 1e6 for r in rows])
    ax.step(xs, ys, where="post")
    ax.set_xlabel("CCT (ms)")
    ax.set_ylabel("CDF")
    ax.set_title("Collective completion time across runs")
    out.append(_save(fig, outdir / "cct_cdf.png"))
    return out


def plot_comparison(cmp_dir: Path, outdir: Path) -> list[Path]:
    out = []
    for fname, xlabel, scale in (("cct_cdf.csv", "CCT (ms)", 1e6),
                                 ("overlap_cdf.csv", "max step overlap", 1)):
        path = cmp_dir / fname
        if not path.exists():
            continue
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        xs = [float(r[0]) / scale for r in rows[1:]]
        fa = [float(r[1]) for r in rows[1:]]
        fb = [float(r[2]) for r in rows[1:]]
        fig, ax = plt.subplots(figsize=(4.2, 3.2))
        ax.step(xs, fa, where="post", label="baseline")
        ax.step(xs, fb, where="post", label="treatment")
        ax.set_xlabel(xlabel)
        ax.set_ylabel("CDF")
        ax.legend(fontsize=8)
        out.append(_save(fig, outdir / fname.replace(".csv", ".png")))
    return out


def render_directory(target: str | Path, outdir: str | Path | None = None) -> list[Path]:
    """Render every chart the directory's contents support."""
    target = Path(target)
    outdir = Path(outdir) if outdir is not None else target / "figures"
    outdir.mkdir(parents=True, exist_ok=True)
    produced: list[Path] = []
    if (target / "overlap.csv").exists():
        produced.append(plot_overlap_timeline(target, outdir))
    if (target / "summary.csv").exists():
        produced.extend(plot_run_cdfs(target, outdir))
    produced.extend(plot_comparison(target, outdir))
    if not produced:
        raise FileNotFoundError(
            f"{target}: no overlap.csv, summary.csv or comparison CSVs found")
    return produced
