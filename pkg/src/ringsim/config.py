"""Scenario configuration: TOML parsing, validation, defaults, serialization.

A scenario file is a TOML document with tables for the fabric, RED, the
congestion-control constants, the selective-marking mechanism (the
``symphony`` table), the workload, perturbations, background traffic,
fault injection, and the run matrix (seeds, horizon, sampling). Every
default is materialized in the bundled ``defaults.toml``; user files only
override. Validation errors name the offending key.
"""
from __future__ import annotations

import hashlib
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .fabric import FabricSpec, LinkPerturbation, RedParams
from .progress import TrackerParams
from .transport import DcqcnParams
from .workloads import (JobSpec, JobStreamSpec, RingSpec,
                        generate_2d_ring, generate_job_stream,
                        generate_multi_1d_rings)

US = 1_000
MS = 1_000_000


class ConfigError(ValueError):
    """Invalid scenario configuration; message names the offending key."""


@dataclass(frozen=True)
class TrackerConfig:
    enable: bool = False
    params: TrackerParams = field(default_factory=TrackerParams)
    activation: int = 0                 # ns; marking engages at this time
    deactivation: int | None = None     # ns; None = never disabled
    placement: str = "all-switches"     # | "tor-only"
    per_port_state: bool = False


@dataclass(frozen=True)
class BackgroundConfig:
    enabled: bool = False
    flows: int = 4
    rate_fraction: float = 0.15
    mean_on: int = 1_000_000
    mean_off: int = 1_000_000


@dataclass(frozen=True)
class DropRule:
    """Discard matching packets at one switch's egress (fault injection)."""

    switch: str
    job_id: int = 0
    step: int = -1          # global step; -1 matches any
    psn: int = -1           # -1 matches any; 0 means "the LAST packet"
    last_only: bool = True
    count: int = 1


@dataclass(frozen=True)
class FaultsConfig:
    drops: tuple[DropRule, ...] = ()
    retransmit: bool = False
    timeout: int = 1_000_000


@dataclass(frozen=True)
class RunConfig:
    seeds: tuple[int, ...] = (1,)
    t_end: int = 1_000_000_000
    sample_interval: int = 100_000
    log_decisions: bool = False
    log_packets: bool = False
    log_trajectories: bool = False

    def __post_init__(self) -> None:
        if not self.seeds:
            raise ConfigError("[run].seeds: must list at least one seed")
        if self.t_end <= 0:
            raise ConfigError("[run].t_end_ms: must be > 0")
        if self.sample_interval <= 0:
            raise ConfigError("[run].sample_interval_us: must be > 0")


@dataclass(frozen=True)
class MultiRingWorkload:
    hosts: int = 32
    rings: int = 8
    chunk_bytes: int = 8 << 20
    passes: int = 1
    start: int = 0
    compute_gap: int = 0
    placement: str = "round_robin"

    def build_jobs(self, fabric: FabricSpec, seed: int) -> list[JobSpec]:
        return [generate_multi_1d_rings(
            self.hosts, self.rings, self.chunk_bytes, self.passes,
            job_id=0, start_at=self.start, compute_gap=self.compute_gap,
            tors=fabric.tors * fabric.pods, placement=self.placement)]


@dataclass(frozen=True)
class Ring2DWorkload:
    dim_a: int = 8
    dim_b: int = 4
    chunk_bytes: int = 8 << 20
    passes: int = 1
    start: int = 0
    compute_gap: int = 0

    def build_jobs(self, fabric: FabricSpec, seed: int) -> list[JobSpec]:
        return [generate_2d_ring(
            self.dim_a, self.dim_b, self.chunk_bytes, self.passes,
            job_id=0, start_at=self.start, compute_gap=self.compute_gap,
            tors=fabric.tors * fabric.pods)]


@dataclass(frozen=True)
class JobListWorkload:
    """Explicit list of jobs, e.g. the two-tenant co-location scenario."""

    jobs: tuple[MultiRingWorkload | Ring2DWorkload, ...] = ()

    def build_jobs(self, fabric: FabricSpec, seed: int) -> list[JobSpec]:
        out = []
        for i, wl in enumerate(self.jobs):
            built = wl.build_jobs(fabric, seed)[0]
            out.append(replace(built, job_id=i))
        return out

    def __post_init__(self) -> None:
        if not self.jobs:
            raise ConfigError("[workload].jobs: must list at least one job")


@dataclass(frozen=True)
class StreamWorkload:
    count: int = 8
    scales: tuple[int, ...] = (16, 32, 64)
    collective_bytes: tuple[int, ...] = (4 << 20, 16 << 20, 32 << 20)
    passes_min: int = 16
    passes_max: int = 128
    max_concurrency: int = 4
    arrival_process: str = "poisson"
    arrival_param: int = 5_000_000
    ring_size: int = 4

    def build_jobs(self, fabric: FabricSpec, seed: int) -> list[JobSpec]:
        spec = JobStreamSpec(
            count=self.count, host_pool=fabric.host_count, scales=self.scales,
            collective_bytes=self.collective_bytes,
            passes_range=(self.passes_min, self.passes_max),
            max_concurrency=self.max_concurrency,
            arrival_process=self.arrival_process,
            arrival_param=self.arrival_param, ring_size=self.ring_size,
            link_rate=fabric.link_rate, seed=seed,
            tors=fabric.tors * fabric.pods)
        return generate_job_stream(spec)


@dataclass(frozen=True)
class ExplicitWorkload:
    """Fully spelled-out job (ring member lists), the serialization target."""

    jobs: tuple[JobSpec, ...] = ()

    def build_jobs(self, fabric: FabricSpec, seed: int) -> list[JobSpec]:
        return list(self.jobs)


Workload = (MultiRingWorkload | Ring2DWorkload | JobListWorkload
            | StreamWorkload | ExplicitWorkload)


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    fabric: FabricSpec = field(default_factory=FabricSpec)
    red: RedParams = field(default_factory=RedParams)
    cc: DcqcnParams = field(default_factory=DcqcnParams)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    workload: Workload = field(default_factory=MultiRingWorkload)
    perturbations: tuple[LinkPerturbation, ...] = ()
    background: BackgroundConfig = field(default_factory=BackgroundConfig)
    faults: FaultsConfig = field(default_factory=FaultsConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def build_jobs(self, seed: int) -> list[JobSpec]:
        jobs = self.workload.build_jobs(self.fabric, seed)
        host_count = self.fabric.host_count
        for job in jobs:
            for h in job.hosts:
                if h >= host_count:
                    raise ConfigError(
                        f"[workload]: job {job.job_id} uses host {h} but the "
                        f"fabric has only {host_count} hosts")
        return jobs


# ---------------------------------------------------------------------------
# parsing


def _get(table: dict, section: str, key: str, kind, default):
    if key not in table:
        return default
    value = table[key]
    if kind is float and isinstance(value, int):
        value = float(value)
    if kind is int and isinstance(value, float) and value.is_integer():
        value = int(value)
    if not isinstance(value, kind):
        raise ConfigError(
            f"[{section}].{key}: expected {kind.__name__}, got {value!r}")
    return value


def _ns_us(table: dict, section: str, key: str, default_ns: int | None):
    if key not in table:
        return default_ns
    v = table[key]
    if not isinstance(v, (int, float)):
        raise ConfigError(f"[{section}].{key}: expected a number, got {v!r}")
    return int(v * US)


def _check_keys(table: dict, section: str, allowed: set[str]) -> None:
    for key in table:
        if key not in allowed:
            raise ConfigError(f"[{section}].{key}: unknown key "
                              f"(valid: {', '.join(sorted(allowed))})")


def _parse_fabric(t: dict) -> FabricSpec:
    _check_keys(t, "fabric", {
        "tors", "spines", "cores", "hosts_per_tor", "pods", "link_rate_gbps",
        "link_latency_us", "oversubscription", "scheduling", "routing",
        "queue_capacity_mib"})
    try:
        return FabricSpec(
            tors=_get(t, "fabric", "tors", int, 4),
            spines=_get(t, "fabric", "spines", int, 4),
            cores=_get(t, "fabric", "cores", int, 0),
            hosts_per_tor=_get(t, "fabric", "hosts_per_tor", int, 8),
            pods=_get(t, "fabric", "pods", int, 1),
            link_rate=int(_get(t, "fabric", "link_rate_gbps", float, 10.0) * 1e9),
            link_latency=_ns_us(t, "fabric", "link_latency_us", 1_000),
            oversubscription=_get(t, "fabric", "oversubscription", float, 1.0),
            scheduling=_get(t, "fabric", "scheduling", str, "fifo"),
            routing=_get(t, "fabric", "routing", str, "ecmp"),
            queue_capacity=_get(t, "fabric", "queue_capacity_mib", int, 64) << 20,
        )
    except ValueError as exc:
        raise ConfigError(f"[fabric]: {exc}") from exc


def _parse_red(t: dict) -> RedParams:
    _check_keys(t, "red", {"kmin_kib", "kmax_kib", "pmax"})
    try:
        return RedParams(
            k_min=_get(t, "red", "kmin_kib", int, 50) * 1024,
            k_max=_get(t, "red", "kmax_kib", int, 100) * 1024,
            p_max=_get(t, "red", "pmax", float, 0.2),
        )
    except ValueError as exc:
        raise ConfigError(f"[red]: {exc}") from exc


def _parse_cc(t: dict) -> DcqcnParams:
    _check_keys(t, "cc", {
        "g", "cnp_interval_us", "alpha_decay_us", "rate_timer_us",
        "fast_recovery_ticks", "rate_ai_mbps", "rate_min_mbps", "mtu_bytes",
        "byte_counter_kib", "retransmit_timeout_us"})
    return DcqcnParams(
        g=_get(t, "cc", "g", float, 1.0 / 256.0),
        cnp_interval=_ns_us(t, "cc", "cnp_interval_us", 50_000),
        alpha_decay_period=_ns_us(t, "cc", "alpha_decay_us", 55_000),
        rate_timer_period=_ns_us(t, "cc", "rate_timer_us", 55_000),
        fast_recovery_ticks=_get(t, "cc", "fast_recovery_ticks", int, 5),
        rate_ai=int(_get(t, "cc", "rate_ai_mbps", float, 40.0) * 1e6),
        rate_min=int(_get(t, "cc", "rate_min_mbps", float, 10.0) * 1e6),
        mtu=_get(t, "cc", "mtu_bytes", int, 1024),
        byte_counter_threshold=_get(t, "cc", "byte_counter_kib", int, 0) * 1024,
        retransmit_timeout=_ns_us(t, "cc", "retransmit_timeout_us", 1_000_000),
    )


def _parse_tracker(t: dict) -> TrackerConfig:
    _check_keys(t, "symphony", {
        "enable", "k", "tau", "t_win_us", "n_warmup", "n_sample", "hw_mode",
        "activation_us", "deactivation_us", "placement", "per_port_state"})
    try:
        params = TrackerParams(
            k=_get(t, "symphony", "k", float, 0.01),
            tau=_get(t, "symphony", "tau", float, 0.25),
            t_win=_ns_us(t, "symphony", "t_win_us", 100_000),
            n_warmup=_get(t, "symphony", "n_warmup", int, 100),
            n_sample=_get(t, "symphony", "n_sample", int, 50),
            hw_mode=_get(t, "symphony", "hw_mode", str, "exact"),
        )
    except ValueError as exc:
        raise ConfigError(f"[symphony]: {exc}") from exc
    placement = _get(t, "symphony", "placement", str, "all-switches")
    if placement not in ("all-switches", "tor-only"):
        raise ConfigError(f"[symphony].placement: unknown value {placement!r}")
    return TrackerConfig(
        enable=_get(t, "symphony", "enable", bool, False),
        params=params,
        activation=_ns_us(t, "symphony", "activation_us", 0),
        deactivation=_ns_us(t, "symphony", "deactivation_us", None),
        placement=placement,
        per_port_state=_get(t, "symphony", "per_port_state", bool, False),
    )


def _parse_one_job(t: dict, section: str) -> MultiRingWorkload | Ring2DWorkload:
    kind = _get(t, section, "type", str, "multi_1d")
    common = dict(
        chunk_bytes=_get(t, section, "chunk_bytes", int, 8 << 20),
        passes=_get(t, section, "passes", int, 1),
        start=_ns_us(t, section, "start_us", 0),
        compute_gap=_ns_us(t, section, "compute_gap_us", 0),
    )
    if kind == "multi_1d":
        _check_keys(t, section, {"type", "hosts", "rings", "chunk_bytes",
                                 "passes", "start_us", "compute_gap_us",
                                 "placement"})
        return MultiRingWorkload(
            hosts=_get(t, section, "hosts", int, 32),
            rings=_get(t, section, "rings", int, 8),
            placement=_get(t, section, "placement", str, "round_robin"),
            **common)
    if kind == "ring2d":
        _check_keys(t, section, {"type", "dim_a", "dim_b", "chunk_bytes",
                                 "passes", "start_us", "compute_gap_us"})
        return Ring2DWorkload(
            dim_a=_get(t, section, "dim_a", int, 8),
            dim_b=_get(t, section, "dim_b", int, 4),
            **common)
    raise ConfigError(f"[{section}].type: unknown workload type {kind!r}")


def _parse_workload(t: dict) -> Workload:
    kind = _get(t, "workload", "type", str, "multi_1d")
    if kind in ("multi_1d", "ring2d"):
        return _parse_one_job(t, "workload")
    if kind == "jobs":
        _check_keys(t, "workload", {"type", "jobs"})
        entries = t.get("jobs", [])
        if not isinstance(entries, list) or not entries:
            raise ConfigError("[workload].jobs: expected a non-empty array of tables")
        return JobListWorkload(tuple(
            _parse_one_job(e, f"workload.jobs[{i}]") for i, e in enumerate(entries)))
    if kind == "stream":
        _check_keys(t, "workload", {
            "type", "count", "scales", "collective_mib", "passes_min",
            "passes_max", "max_concurrency", "arrival_process",
            "arrival_mean_us", "ring_size"})
        try:
            return StreamWorkload(
                count=_get(t, "workload", "count", int, 8),
                scales=tuple(t.get("scales", [16, 32, 64])),
                collective_bytes=tuple(
                    int(m) << 20 for m in t.get("collective_mib", [4, 16, 32])),
                passes_min=_get(t, "workload", "passes_min", int, 16),
                passes_max=_get(t, "workload", "passes_max", int, 128),
                max_concurrency=_get(t, "workload", "max_concurrency", int, 4),
                arrival_process=_get(t, "workload", "arrival_process", str, "poisson"),
                arrival_param=_ns_us(t, "workload", "arrival_mean_us", 5_000_000),
                ring_size=_get(t, "workload", "ring_size", int, 4),
            )
        except ValueError as exc:
            raise ConfigError(f"[workload]: {exc}") from exc
    if kind == "explicit":
        _check_keys(t, "workload", {"type", "jobs"})
        jobs = []
        for i, e in enumerate(t.get("jobs", [])):
            section = f"workload.jobs[{i}]"
            rings = tuple(
                RingSpec(r["ring_id"], r.get("phase", 0), tuple(r["members"]))
                for r in e.get("rings", []))
            jobs.append(JobSpec(
                job_id=_get(e, section, "job_id", int, i),
                hosts=tuple(e.get("hosts", [])),
                rings=rings,
                chunk_bytes=_get(e, section, "chunk_bytes", int, 8 << 20),
                passes=_get(e, section, "passes", int, 1),
                start_at=_ns_us(e, section, "start_us", 0),
                compute_gap=_ns_us(e, section, "compute_gap_us", 0)))
        return ExplicitWorkload(tuple(jobs))
    raise ConfigError(f"[workload].type: unknown workload type {kind!r}")


def _parse_perturbations(entries: list) -> tuple[LinkPerturbation, ...]:
    out = []
    for i, e in enumerate(entries):
        section = f"perturbations[{i}]"
        _check_keys(e, section, {"link", "capacity_multiplier", "start_us", "end_us"})
        if "link" not in e:
            raise ConfigError(f"[{section}].link: required")
        end = _ns_us(e, section, "end_us", None)
        try:
            out.append(LinkPerturbation(
                link=e["link"],
                capacity_multiplier=_get(e, section, "capacity_multiplier",
                                         float, 1.0),
                start=_ns_us(e, section, "start_us", 0),
                end=end if end is not None else 1 << 62))
        except ValueError as exc:
            raise ConfigError(f"[{section}]: {exc}") from exc
    return tuple(out)


def _parse_faults(t: dict) -> FaultsConfig:
    _check_keys(t, "faults", {"retransmit", "timeout_us", "drops"})
    drops = []
    for i, e in enumerate(t.get("drops", [])):
        section = f"faults.drops[{i}]"
        _check_keys(e, section, {"switch", "job_id", "step", "psn", "count"})
        if "switch" not in e:
            raise ConfigError(f"[{section}].switch: required")
        psn = e.get("psn", "last")
        last_only = psn == "last"
        if not last_only and not isinstance(psn, int):
            raise ConfigError(f"[{section}].psn: expected an int or \"last\"")
        drops.append(DropRule(
            switch=e["switch"],
            job_id=_get(e, section, "job_id", int, 0),
            step=_get(e, section, "step", int, -1),
            psn=-1 if last_only else psn,
            last_only=last_only,
            count=_get(e, section, "count", int, 1)))
    return FaultsConfig(
        drops=tuple(drops),
        retransmit=_get(t, "faults", "retransmit", bool, False),
        timeout=_ns_us(t, "faults", "timeout_us", 1_000_000))


def parse_config_dict(data: dict, name: str = "scenario") -> ScenarioConfig:
    known = {"name", "fabric", "red", "cc", "symphony", "workload",
             "perturbations", "background", "faults", "run"}
    _check_keys(data, "<root>", known)
    bg = data.get("background", {})
    _check_keys(bg, "background", {"enabled", "flows", "rate_fraction",
                                   "mean_on_us", "mean_off_us"})
    run_t = data.get("run", {})
    _check_keys(run_t, "run", {"seeds", "t_end_ms", "sample_interval_us",
                               "log_decisions", "log_packets",
                               "log_trajectories"})
    seeds = run_t.get("seeds", [1])
    if (not isinstance(seeds, list) or not seeds
            or not all(isinstance(s, int) for s in seeds)):
        raise ConfigError("[run].seeds: expected a non-empty list of ints")
    t_end_ms = run_t.get("t_end_ms", 1000.0)
    if not isinstance(t_end_ms, (int, float)) or t_end_ms <= 0:
        raise ConfigError("[run].t_end_ms: must be a positive number")
    return ScenarioConfig(
        name=data.get("name", name),
        fabric=_parse_fabric(data.get("fabric", {})),
        red=_parse_red(data.get("red", {})),
        cc=_parse_cc(data.get("cc", {})),
        tracker=_parse_tracker(data.get("symphony", {})),
        workload=_parse_workload(data.get("workload", {})),
        perturbations=_parse_perturbations(data.get("perturbations", [])),
        background=BackgroundConfig(
            enabled=_get(bg, "background", "enabled", bool, False),
            flows=_get(bg, "background", "flows", int, 4),
            rate_fraction=_get(bg, "background", "rate_fraction", float, 0.15),
            mean_on=_ns_us(bg, "background", "mean_on_us", 1_000_000),
            mean_off=_ns_us(bg, "background", "mean_off_us", 1_000_000)),
        faults=_parse_faults(data.get("faults", {})),
        run=RunConfig(
            seeds=tuple(seeds),
            t_end=int(t_end_ms * MS),
            sample_interval=_ns_us(run_t, "run", "sample_interval_us", 100_000),
            log_decisions=run_t.get("log_decisions", False),
            log_packets=run_t.get("log_packets", False),
            log_trajectories=run_t.get("log_trajectories", False)),
    )


def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if key in out and isinstance(out[key], dict) and isinstance(value, dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def load_defaults_dict() -> dict:
    text = resources.files("ringsim").joinpath("scenarios/defaults.toml").read_text()
    return tomllib.loads(text)


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply ``section.key=value`` strings on top of a parsed config dict."""
    out = data
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        dotted, raw = item.split("=", 1)
        keys = dotted.strip().split(".")
        try:
            value = tomllib.loads(f"v = {raw.strip()}")["v"]
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"override {item!r}: bad value ({exc})") from exc
        cursor = out = _deep_merge(out, {})
        for k in keys[:-1]:
            nxt = cursor.get(k)
            if not isinstance(nxt, dict):
                nxt = {}
            nxt = dict(nxt)
            cursor[k] = nxt
            cursor = nxt
        cursor[keys[-1]] = value
    return out


def load_config(path: str | Path, overrides: list[str] | None = None) -> ScenarioConfig:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: TOML syntax error: {exc}") from exc
    defaults = load_defaults_dict()
    # A workload of a different type replaces the default table wholesale;
    # merging would leak keys across discriminated variants.
    user_wl = data.get("workload")
    if (isinstance(user_wl, dict)
            and user_wl.get("type", "multi_1d") != defaults["workload"]["type"]):
        defaults = dict(defaults)
        defaults.pop("workload")
    merged = _deep_merge(defaults, data)
    if overrides:
        merged = apply_overrides(merged, overrides)
    return parse_config_dict(merged, name=path.stem)


# ---------------------------------------------------------------------------
# serialization (round-trip with every default materialized)


def config_to_dict(cfg: ScenarioConfig) -> dict:
    fb, red, cc, tr, run = cfg.fabric, cfg.red, cfg.cc, cfg.tracker, cfg.run
    out: dict[str, Any] = {
        "name": cfg.name,
        "fabric": {
            "tors": fb.tors, "spines": fb.spines, "cores": fb.cores,
            "hosts_per_tor": fb.hosts_per_tor, "pods": fb.pods,
            "link_rate_gbps": fb.link_rate / 1e9,
            "link_latency_us": fb.link_latency / US,
            "oversubscription": fb.oversubscription,
            "scheduling": fb.scheduling, "routing": fb.routing,
            "queue_capacity_mib": fb.queue_capacity >> 20,
        },
        "red": {"kmin_kib": red.k_min // 1024, "kmax_kib": red.k_max // 1024,
                "pmax": red.p_max},
        "cc": {
            "g": cc.g, "cnp_interval_us": cc.cnp_interval / US,
            "alpha_decay_us": cc.alpha_decay_period / US,
            "rate_timer_us": cc.rate_timer_period / US,
            "fast_recovery_ticks": cc.fast_recovery_ticks,
            "rate_ai_mbps": cc.rate_ai / 1e6, "rate_min_mbps": cc.rate_min / 1e6,
            "mtu_bytes": cc.mtu,
            "byte_counter_kib": cc.byte_counter_threshold // 1024,
            "retransmit_timeout_us": cc.retransmit_timeout / US,
        },
        "symphony": {
            "enable": tr.enable, "k": tr.params.k, "tau": tr.params.tau,
            "t_win_us": tr.params.t_win / US, "n_warmup": tr.params.n_warmup,
            "n_sample": tr.params.n_sample, "hw_mode": tr.params.hw_mode,
            "activation_us": tr.activation / US,
            **({"deactivation_us": tr.deactivation / US}
               if tr.deactivation is not None else {}),
            "placement": tr.placement, "per_port_state": tr.per_port_state,
        },
        "workload": _workload_to_dict(cfg.workload),
    }
    if cfg.perturbations:
        out["perturbations"] = [
            {"link": p.link, "capacity_multiplier": p.capacity_multiplier,
             "start_us": p.start / US,
             **({"end_us": p.end / US} if p.end < (1 << 62) else {})}
            for p in cfg.perturbations]
    bg = cfg.background
    out["background"] = {
        "enabled": bg.enabled, "flows": bg.flows,
        "rate_fraction": bg.rate_fraction, "mean_on_us": bg.mean_on / US,
        "mean_off_us": bg.mean_off / US}
    flt = cfg.faults
    out["faults"] = {"retransmit": flt.retransmit,
                     "timeout_us": flt.timeout / US}
    if flt.drops:
        out["faults"]["drops"] = [
            {"switch": d.switch, "job_id": d.job_id, "step": d.step,
             "psn": "last" if d.last_only else d.psn, "count": d.count}
            for d in flt.drops]
    out["run"] = {
        "seeds": list(run.seeds), "t_end_ms": run.t_end / MS,
        "sample_interval_us": run.sample_interval / US,
        "log_decisions": run.log_decisions, "log_packets": run.log_packets,
        "log_trajectories": run.log_trajectories}
    return out


def _workload_to_dict(wl: Workload) -> dict:
    if isinstance(wl, MultiRingWorkload):
        return {"type": "multi_1d", "hosts": wl.hosts, "rings": wl.rings,
                "chunk_bytes": wl.chunk_bytes, "passes": wl.passes,
                "start_us": wl.start / US, "compute_gap_us": wl.compute_gap / US,
                "placement": wl.placement}
    if isinstance(wl, Ring2DWorkload):
        return {"type": "ring2d", "dim_a": wl.dim_a, "dim_b": wl.dim_b,
                "chunk_bytes": wl.chunk_bytes, "passes": wl.passes,
                "start_us": wl.start / US, "compute_gap_us": wl.compute_gap / US}
    if isinstance(wl, JobListWorkload):
        return {"type": "jobs",
                "jobs": [_workload_to_dict(j) for j in wl.jobs]}
    if isinstance(wl, StreamWorkload):
        return {"type": "stream", "count": wl.count, "scales": list(wl.scales),
                "collective_mib": [b >> 20 for b in wl.collective_bytes],
                "passes_min": wl.passes_min, "passes_max": wl.passes_max,
                "max_concurrency": wl.max_concurrency,
                "arrival_process": wl.arrival_process,
                "arrival_mean_us": wl.arrival_param / US,
                "ring_size": wl.ring_size}
    if isinstance(wl, ExplicitWorkload):
        return {"type": "explicit", "jobs": [j.to_config() for j in wl.jobs]}
    raise TypeError(f"unknown workload {wl!r}")


def _toml_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int,)):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        escaped = v.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {v!r}")


def _emit_table(lines: list[str], prefix: str, table: dict) -> None:
    scalars = {k: v for k, v in table.items()
               if not isinstance(v, dict)
               and not (isinstance(v, list) and v and isinstance(v[0], dict))}
    if prefix:
        lines.append(f"[{prefix}]")
    for k, v in scalars.items():
        lines.append(f"{k} = {_toml_value(v)}")
    if scalars or prefix:
        lines.append("")
    for k, v in table.items():
        if isinstance(v, dict):
            _emit_table(lines, f"{prefix}.{k}" if prefix else k, v)
        elif isinstance(v, list) and v and isinstance(v[0], dict):
            for entry in v:
                lines.append(f"[[{prefix}.{k}]]" if prefix else f"[[{k}]]")
                for ek, ev in entry.items():
                    lines.append(f"{ek} = {_toml_value(ev)}")
                lines.append("")


def serialize_config(cfg: ScenarioConfig) -> str:
    """Stable TOML text with all defaults materialized."""
    lines: list[str] = []
    _emit_table(lines, "", config_to_dict(cfg))
    return "\n".join(lines).rstrip() + "\n"


def config_hash(cfg: ScenarioConfig) -> str:
    return hashlib.sha256(serialize_config(cfg).encode()).hexdigest()
