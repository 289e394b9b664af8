"""Flow-level descriptions of ring-based collective jobs.

A job owns one or more host cycles (rings). Every pass of a ring of N
members runs 2(N-1) pipelined steps; in each step every member sends one
chunk to its successor, and a member may start step s+1 only after its
step-s receive finished (plus an optional compute gap standing in for the
reduction). Step indices continue across passes so progress is monotone
over repeated operations.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field

from .transport import FlowSpec


@dataclass(frozen=True)
class RingSpec:
    ring_id: int
    phase: int
    members: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(set(self.members)) != len(self.members):
            raise ValueError(f"ring {self.ring_id}: members must form a cycle "
                             f"without repeats: {self.members}")


@dataclass(frozen=True)
class JobSpec:
    """A whole collective job: rings, chunk size, passes, start time."""

    job_id: int
    hosts: tuple[int, ...]
    rings: tuple[RingSpec, ...]
    chunk_bytes: int
    passes: int
    start_at: int = 0
    compute_gap: int = 0

    def __post_init__(self) -> None:
        if self.chunk_bytes <= 0:
            raise ValueError("chunk_bytes must be > 0")
        if self.passes < 1:
            raise ValueError("passes must be >= 1")
        sizes = {}
        for ring in self.rings:
            sizes.setdefault(ring.phase, set()).add(len(ring.members))
        for phase, ns in sizes.items():
            if len(ns) > 1:
                raise ValueError(f"phase {phase}: rings must share one size, got {ns}")

    @property
    def phases(self) -> list[int]:
        return sorted({r.phase for r in self.rings})

    def phase_steps(self, phase: int) -> int:
        n = next(len(r.members) for r in self.rings if r.phase == phase)
        return 2 * (n - 1)

    @property
    def steps_per_pass(self) -> int:
        return sum(self.phase_steps(p) for p in self.phases)

    @property
    def total_steps(self) -> int:
        return self.passes * self.steps_per_pass

    def to_config(self) -> dict:
        """Round-trippable description for the scenario file format."""
        return {
            "type": "explicit",
            "job_id": self.job_id,
            "hosts": list(self.hosts),
            "rings": [{"ring_id": r.ring_id, "phase": r.phase,
                       "members": list(r.members)} for r in self.rings],
            "chunk_bytes": self.chunk_bytes,
            "passes": self.passes,
            "start_us": self.start_at // 1_000,
            "compute_gap_us": self.compute_gap // 1_000,
        }


def _round_robin_order(hosts: tuple[int, ...], tors: int) -> tuple[int, ...]:
    """Reorder hosts so consecutive positions land on consecutive ToR groups.

    The input is treated as ToR-grouped (the fabric numbers hosts that way);
    reading the groups column-major makes every ring hop cross the spine
    layer. Falls back to the given order when the count does not divide.
    """
    if tors <= 1 or len(hosts) % tors != 0:
        return hosts
    per = len(hosts) // tors
    grid = [hosts[t * per:(t + 1) * per] for t in range(tors)]
    return tuple(grid[t][i] for i in range(per) for t in range(tors))


def generate_multi_1d_rings(hosts, rings_count: int, chunk_bytes: int,
                            passes: int, *, job_id: int = 0, start_at: int = 0,
                            compute_gap: int = 0, tors: int = 1,
                            placement: str = "round_robin") -> JobSpec:
    """Partition hosts into parallel 1D rings (disjoint channels).

    ``hosts`` may be a count or an explicit id sequence. With round-robin
    placement each ring takes one member per ToR group in turn, so every
    hop crosses the fabric.
    """
    if isinstance(hosts, int):
        hosts = tuple(range(hosts))
    else:
        hosts = tuple(hosts)
    if rings_count < 1 or len(hosts) % rings_count != 0:
        raise ValueError(
            f"{len(hosts)} hosts cannot split into {rings_count} equal rings")
    n = len(hosts) // rings_count
    if n < 2:
        raise ValueError(f"ring size {n} too small; need >= 2 members")
    order = _round_robin_order(hosts, tors) if placement == "round_robin" else hosts
    rings = tuple(RingSpec(r, 0, order[r * n:(r + 1) * n])
                  for r in range(rings_count))
    return JobSpec(job_id, hosts, rings, chunk_bytes, passes,
                   start_at, compute_gap)


def generate_2d_ring(dim_a: int, dim_b: int, chunk_bytes: int, passes: int, *,
                     hosts=None, job_id: int = 0, start_at: int = 0,
                     compute_gap: int = 0, tors: int = 1) -> JobSpec:
    """Two-phase logical topology: dim_b row-rings of dim_a, then dim_a
    column-rings of dim_b. Phase-2 flows start only after the node finished
    phase 1. Either dimension may be 1, degenerating to a single 1D ring."""
    if dim_a < 1 or dim_b < 1 or dim_a * dim_b < 2:
        raise ValueError(f"invalid ring dimensions {dim_a}x{dim_b}")
    if hosts is None:
        hosts = tuple(range(dim_a * dim_b))
    else:
        hosts = tuple(hosts)
    if len(hosts) != dim_a * dim_b:
        raise ValueError(
            f"{dim_a}x{dim_b} grid needs {dim_a * dim_b} hosts, got {len(hosts)}")
    order = _round_robin_order(hosts, tors)
    rings: list[RingSpec] = []
    rid = 0
    if dim_a >= 2:
        for row in range(dim_b):
            rings.append(RingSpec(rid, 0, order[row * dim_a:(row + 1) * dim_a]))
            rid += 1
    if dim_b >= 2:
        phase = 1 if dim_a >= 2 else 0
        for col in range(dim_a):
            members = tuple(order[row * dim_a + col] for row in range(dim_b))
            rings.append(RingSpec(rid, phase, members))
            rid += 1
    return JobSpec(job_id, hosts, tuple(rings), chunk_bytes, passes,
                   start_at, compute_gap)


def build_flows(job: JobSpec) -> list[FlowSpec]:
    """Expand a job into its flow set with dependency gating.

    Every flow except the very first step of a ring member's schedule
    depends on exactly one predecessor: the previous step's receive at its
    source (within a phase), the node's final previous-phase receive (at a
    phase boundary), or the node's final receive of the previous pass.
    """
    phases = job.phases
    phase_rings = {p: [r for r in job.rings if r.phase == p] for p in phases}
    phase_offsets: dict[int, int] = {}
    off = 0
    for p in phases:
        phase_offsets[p] = off
        off += job.phase_steps(p)
    steps_per_pass = off

    # (host, phase) -> (ring, position); each host appears once per phase.
    member_of: dict[tuple[int, int], tuple[RingSpec, int]] = {}
    for p in phases:
        for ring in phase_rings[p]:
            for i, h in enumerate(ring.members):
                key = (h, p)
                if key in member_of:
                    raise ValueError(
                        f"host {h} appears in two phase-{p} rings")
                member_of[key] = (ring, i)

    flows: list[FlowSpec] = []
    # (ring_id, global_step, src) -> flow_id, for dependency lookups.
    index: dict[tuple[int, int, int], int] = {}

    def final_recv_flow(host: int, phase: int, pass_idx: int) -> int:
        """Flow id of the last packet this host receives in (pass, phase)."""
        ring, i = member_of[(host, phase)]
        last_step = (pass_idx * steps_per_pass + phase_offsets[phase]
                     + 2 * (len(ring.members) - 1) - 1)
        pred = ring.members[(i - 1) % len(ring.members)]
        return index[(ring.ring_id, last_step, pred)]

    for pass_idx in range(job.passes):
        for p in phases:
            n_steps = job.phase_steps(p)
            for s in range(n_steps):
                gstep = pass_idx * steps_per_pass + phase_offsets[p] + s
                for ring in phase_rings[p]:
                    members = ring.members
                    n = len(members)
                    for i, src in enumerate(members):
                        dst = members[(i + 1) % n]
                        deps: tuple[int, ...] = ()
                        if s > 0:
                            pred = members[(i - 1) % n]
                            deps = (index[(ring.ring_id, gstep - 1, pred)],)
                        elif phase_offsets[p] > 0:
                            prev_phase = phases[phases.index(p) - 1]
                            deps = (final_recv_flow(src, prev_phase, pass_idx),)
                        elif pass_idx > 0:
                            deps = (final_recv_flow(src, phases[-1], pass_idx - 1),)
                        fid = len(flows)
                        flows.append(FlowSpec(
                            fid, job.job_id, ring.ring_id, gstep, src, dst,
                            job.chunk_bytes, deps, pass_idx,
                            phase_offsets[p] + s))
                        index[(ring.ring_id, gstep, src)] = fid
    return flows


def theoretical_cct(n_ring: int, chunk_bytes: int, link_rate: int) -> int:
    """Perfect-lockstep lower bound for one pass: 2(N-1) chunk times, ns.

    Propagation and per-hop store-and-forward delays are ignored.
    """
    if n_ring < 2:
        raise ValueError("ring needs >= 2 members")
    return 2 * (n_ring - 1) * chunk_bytes * 8 * 1_000_000_000 // link_rate


@dataclass(frozen=True)
class JobStreamSpec:
    """Randomized multi-tenant arrival stream of ring collectives."""

    count: int
    host_pool: int
    scales: tuple[int, ...] = (16, 32, 64)
    collective_bytes: tuple[int, ...] = (4 << 20, 16 << 20, 32 << 20)
    passes_range: tuple[int, int] = (16, 128)
    max_concurrency: int = 4
    arrival_process: str = "poisson"        # "poisson" | "fixed"
    arrival_param: int = 5_000_000          # mean (poisson) or exact (fixed) gap, ns
    ring_size: int = 4
    link_rate: int = 10_000_000_000         # for the duration estimates
    seed: int = 0
    tors: int = 1

    def __post_init__(self) -> None:
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")
        if self.arrival_process not in ("poisson", "fixed"):
            raise ValueError(f"unknown arrival_process {self.arrival_process!r}")


def generate_job_stream(spec: JobStreamSpec) -> list[JobSpec]:
    """Seeded job stream honoring the concurrency cap.

    Concurrency is enforced against estimated durations (twice the lockstep
    bound), which keeps generation independent of simulation outcomes while
    still bounding realistic overlap. Host subsets rotate round-robin
    through the pool so concurrent jobs contend on fabric links.
    """
    rng = random.Random(f"{spec.seed}/jobstream")
    jobs: list[JobSpec] = []
    active: list[int] = []  # estimated completion times
    t = 0
    host_cursor = 0
    for j in range(spec.count):
        if j > 0:
            if spec.arrival_process == "fixed":
                t += spec.arrival_param
            else:
                t += int(rng.expovariate(1.0 / spec.arrival_param))
        active = [e for e in active if e > t]
        while len(active) >= spec.max_concurrency:
            t = min(active)
            active = [e for e in active if e > t]
        scale = min(rng.choice(spec.scales), spec.host_pool)
        total = rng.choice(spec.collective_bytes)
        passes = rng.randint(*spec.passes_range)
        chunk = max(1, total // scale)
        hosts = tuple((host_cursor + i) % spec.host_pool for i in range(scale))
        host_cursor = (host_cursor + scale) % spec.host_pool
        job = generate_multi_1d_rings(
            hosts, max(1, scale // spec.ring_size), chunk, passes,
            job_id=j, start_at=t, tors=spec.tors)
        jobs.append(job)
        est = 2 * passes * theoretical_cct(spec.ring_size, chunk, spec.link_rate)
        active.append(t + est)
    return jobs
