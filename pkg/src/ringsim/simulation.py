"""Single-run simulation: wires the engine, fabric, hosts, and trackers.

One Simulation object owns one timeline. Hosts emit paced packets per ring
channel (one outstanding step message per ring), switch egress queues RED-
mark on instantaneous depth at enqueue, and at dequeue the per-switch
progress tracker may add its own mark (logical OR with RED). Receivers echo
CNPs for CE-marked arrivals, driving the DCQCN rate loop of the sending
channel. Flow starts are gated on the source's previous-step receive.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from .config import ScenarioConfig
from .core import Engine, EventKind, Rng
from .fabric import HOST, TOR, Fabric, build_fabric
from .progress import SwitchTracker
from .transport import (DcqcnParams, Packet, RateState, decay_cc_alpha,
                        on_cnp, packet_count, rate_increase_tick)
from .workloads import JobSpec, build_flows

_ARRIVAL = int(EventKind.PACKET_ARRIVAL)
_TX_DONE = int(EventKind.TRANSMIT_COMPLETE)
_EMIT = int(EventKind.PACKET_DEQUEUE)
_SAMPLER = int(EventKind.WINDOW_TICK)
_CNP = int(EventKind.CNP_DELIVERY)
_RATE = int(EventKind.RATE_TIMER)
_FLOW = int(EventKind.FLOW_START)
_JOB = int(EventKind.JOB_ARRIVAL)
_FAULT = int(EventKind.FAULT_TRIGGER)

_FAR_FUTURE = 1 << 62


class RuntimeFlow:
    __slots__ = ("fid", "job", "job_id", "ring_id", "step", "pass_idx",
                 "step_in_pass", "src", "dst", "npackets", "last_size",
                 "channel", "unmet", "dependents", "emit_next", "started_at",
                 "emitted_at", "recv_contig", "completed_at", "last_cnp_at",
                 "retransmissions")

    def __init__(self, spec, job, npackets: int, last_size: int):
        self.fid = spec.flow_id
        self.job = job
        self.job_id = spec.job_id
        self.ring_id = spec.ring_id
        self.step = spec.step
        self.pass_idx = spec.pass_idx
        self.step_in_pass = spec.step_in_pass
        self.src = spec.src
        self.dst = spec.dst
        self.npackets = npackets
        self.last_size = last_size
        self.channel = None
        self.unmet = len(spec.depends_on)
        self.dependents: list[RuntimeFlow] = []
        self.emit_next = 1
        self.started_at = None
        self.emitted_at = None
        self.recv_contig = 0
        self.completed_at = None
        self.last_cnp_at = -_FAR_FUTURE
        self.retransmissions = 0


class Channel:
    """One ring sender: a persistent connection from src to its successor."""

    __slots__ = ("key", "src", "dst", "rate_state", "pending", "active",
                 "next_free", "timer_on", "path", "link_rate")

    def __init__(self, key, src: int, dst: int, link_rate: int, path):
        self.key = key
        self.src = src
        self.dst = dst
        self.rate_state = RateState(link_rate)
        self.pending: deque[RuntimeFlow] = deque()
        self.active: RuntimeFlow | None = None
        self.next_free = 0
        self.timer_on = False
        self.path = path
        self.link_rate = link_rate


class BgFlow:
    """Flow-shaped metadata for background packets (not tracked, no CC)."""

    __slots__ = ("job", "job_id", "ring_id", "step", "fid", "channel",
                 "last_cnp_at", "recv_contig")

    def __init__(self, fid: int):
        self.job = None
        self.job_id = -1
        self.ring_id = -1
        self.step = 0
        self.fid = fid
        self.channel = None
        self.last_cnp_at = -_FAR_FUTURE
        self.recv_contig = 0


class BgSource:
    __slots__ = ("flow", "src", "dst", "path", "rate", "on", "psn", "size")

    def __init__(self, flow, src, dst, path, rate, size):
        self.flow = flow
        self.src = src
        self.dst = dst
        self.path = path
        self.rate = rate
        self.on = False
        self.psn = 0
        self.size = size


class _DropState:
    __slots__ = ("rule", "remaining")

    def __init__(self, rule):
        self.rule = rule
        self.remaining = rule.count


class JobRuntime:
    def __init__(self, spec: JobSpec, link_rate: int):
        self.spec = spec
        self.job_id = spec.job_id
        self.start_at = spec.start_at
        self.compute_gap = spec.compute_gap
        self.flows: list[RuntimeFlow] = []
        self.inflight: dict[int, int] = {}
        self.step_remaining: dict[int, int] = {}
        self.pass_remaining: dict[int, int] = {}
        self.pass_started: dict[int, int] = {}
        self.pass_complete: dict[int, int] = {}
        self.step_completions: list[tuple[int, int, int, int]] = []
        self.overlap_samples: list[tuple[int, int]] = []
        self.passes_left = spec.passes
        self.done = False
        self.completed_at = None
        self.final_step = spec.total_steps - 1
        self.steps_per_pass = spec.steps_per_pass
        self.chunk_bytes = spec.chunk_bytes
        self.link_rate = link_rate


@dataclass
class JobResult:
    """Per-job outcome of one run; plain data, safe to pickle."""

    job_id: int
    start_at: int
    completed: bool
    jct: int | None
    pass_ccts: list[int]
    max_overlap: int
    final_step_span: int | None
    red_marks: int
    symphony_marks: int
    overlap_samples: list[tuple[int, int]]
    step_completions: list[tuple[int, int, int, int]]
    chunk_bytes: int
    steps_per_pass: int
    passes: int
    link_rate: int
    flow_records: list[tuple[int, int, int, int, int]] = field(default_factory=list)
    # flow_records rows: (fid, step, started_at, completed_at, retransmissions)


@dataclass
class RunResult:
    seed: int
    truncated: bool
    t_final: int
    event_count: int
    jobs: list[JobResult]
    drops: int = 0
    retransmissions: int = 0
    decisions: list[tuple] | None = None
    trajectories: dict[str, dict[int, list[tuple]]] | None = None
    packet_events: list[tuple] | None = None


class Simulation:
    def __init__(self, cfg: ScenarioConfig, seed: int):
        self.cfg = cfg
        self.seed = seed
        self.engine = Engine()
        self.rng = Rng(seed)
        self.fabric: Fabric = build_fabric(cfg.fabric, ecmp_seed=seed)
        self.cc: DcqcnParams = cfg.cc
        self.t_end = cfg.run.t_end
        self.sample_interval = cfg.run.sample_interval
        self.link_latency = cfg.fabric.link_latency
        self.mtu = cfg.cc.mtu
        self._red_random = self.rng.stream("red").random
        self._pq = cfg.fabric.scheduling == "strict-priority"

        self.red_marks: dict[int, int] = {}
        self.sym_marks: dict[int, int] = {}
        self.drops = 0
        self.retransmissions = 0
        self.packet_events: list[tuple] | None = (
            [] if cfg.run.log_packets else None)

        for pert in cfg.perturbations:
            self.fabric.apply_perturbation(pert)

        # Progress trackers: on every switch (or ToRs only), marking gated
        # by the enable flag and activation window; strict-priority
        # scheduling needs the tracking state even with marking off.
        self.trackers: list[SwitchTracker] = []
        need_tracking = cfg.tracker.enable or self._pq
        if need_tracking:
            mark_stream = self.rng.stream("mark")
            tcfg = cfg.tracker
            active_from = tcfg.activation if tcfg.enable else 0
            active_until = tcfg.deactivation if tcfg.enable else None
            by_switch: dict[int, SwitchTracker] = {}
            for link in self.fabric.switch_links():
                node = link.src
                if tcfg.placement == "tor-only" and node.kind != TOR:
                    continue
                if tcfg.per_port_state:
                    tracker = SwitchTracker(
                        tcfg.params, link.name, mark_stream,
                        marking=tcfg.enable, active_from=active_from,
                        active_until=active_until)
                    self.trackers.append(tracker)
                else:
                    tracker = by_switch.get(node.index)
                    if tracker is None:
                        tracker = SwitchTracker(
                            tcfg.params, node.name, mark_stream,
                            marking=tcfg.enable, active_from=active_from,
                            active_until=active_until)
                        by_switch[node.index] = tracker
                        self.trackers.append(tracker)
                link.tracker = tracker
            if cfg.run.log_decisions:
                self.decision_rows: list[tuple] = []
                for tr in self.trackers:
                    tr.decision_log = self.decision_rows
            if cfg.run.log_trajectories:
                for tr in self.trackers:
                    tr.trajectory_log = {}

        for link in self.fabric.switch_links():
            link.red = cfg.red

        # Fault-injection drop rules attach to the named switch's egress.
        self._drop_states: list[_DropState] = []
        drop_map: dict[str, list[_DropState]] = {}
        for rule in cfg.faults.drops:
            st = _DropState(rule)
            self._drop_states.append(st)
            drop_map.setdefault(rule.switch, []).append(st)
        self._link_drops: dict[int, list[_DropState]] = {}
        if drop_map:
            names = {n.name for n in self.fabric.nodes}
            for sw_name in drop_map:
                if sw_name not in names:
                    from .fabric import FabricError
                    raise FabricError(f"drop rule targets unknown switch {sw_name!r}")
            for link in self.fabric.switch_links():
                if link.src.name in drop_map:
                    self._link_drops[link.index] = drop_map[link.src.name]

        # Jobs, flows, channels.
        self.jobs: list[JobRuntime] = []
        self.channels: dict[tuple[int, int, int], Channel] = {}
        link_rate = cfg.fabric.link_rate
        for spec in cfg.build_jobs(seed):
            job = JobRuntime(spec, link_rate)
            self.jobs.append(job)
            npk = packet_count(spec.chunk_bytes, self.mtu)
            last_size = spec.chunk_bytes - (npk - 1) * self.mtu
            flow_specs = build_flows(spec)
            for fs in flow_specs:
                rf = RuntimeFlow(fs, job, npk, last_size)
                job.flows.append(rf)
                job.step_remaining[fs.step] = job.step_remaining.get(fs.step, 0) + 1
                job.pass_remaining[fs.pass_idx] = (
                    job.pass_remaining.get(fs.pass_idx, 0) + 1)
            for rf, fs in zip(job.flows, flow_specs):
                for dep in fs.depends_on:
                    job.flows[dep].dependents.append(rf)
                key = (rf.job_id, rf.ring_id, rf.src)
                ch = self.channels.get(key)
                if ch is None:
                    tup = (rf.src, rf.dst,
                           49152 + (rf.job_id * 131 + rf.ring_id * 31) % 16384,
                           4791, 17)
                    path = self.fabric.select_path(rf.src, rf.dst, tup)
                    ch = Channel(key, rf.src, rf.dst, link_rate, path)
                    self.channels[key] = ch
                rf.channel = ch
            self.engine.schedule(spec.start_at, _JOB, self._on_job_arrival, job)

        # Background cross traffic (on/off paced sources).
        self.bg_sources: list[BgSource] = []
        self.bg_delivered = 0
        bg = cfg.background
        if bg.enabled:
            arr = self.rng.stream("arrivals")
            nhosts = cfg.fabric.host_count
            for i in range(bg.flows):
                src = arr.randrange(nhosts)
                dst = arr.randrange(nhosts - 1)
                if dst >= src:
                    dst += 1
                tup = (src, dst, 1024 + i, 4791, 17)
                path = self.fabric.select_path(src, dst, tup)
                source = BgSource(BgFlow(-(i + 2)), src, dst, path,
                                  int(link_rate * bg.rate_fraction), self.mtu)
                self.bg_sources.append(source)
                self.engine.schedule(0, _FAULT, self._on_bg_toggle, source)

    # -- host side ---------------------------------------------------------

    def _on_job_arrival(self, job: JobRuntime) -> None:
        now = self.engine.now()
        for tracker in self.trackers:
            tracker.register_job(job.job_id, now)
        for rf in job.flows:
            if rf.unmet == 0:
                self.engine.schedule(now, _FLOW, self._on_flow_start, rf)
        self.engine.schedule(now, _SAMPLER, self._on_sampler, job)

    def _on_flow_start(self, flow: RuntimeFlow) -> None:
        ch = flow.channel
        ch.pending.append(flow)
        if ch.active is None:
            self._activate_next(ch)

    def _activate_next(self, ch: Channel) -> None:
        flow = ch.pending.popleft()
        ch.active = flow
        now = self.engine.now()
        at = now if now > ch.next_free else ch.next_free
        if flow.started_at is None:
            flow.started_at = at
            job = flow.job
            if flow.pass_idx not in job.pass_started:
                job.pass_started[flow.pass_idx] = at
        self.engine.schedule(at, _EMIT, self._on_emit, ch)
        if not ch.timer_on:
            ch.timer_on = True
            self.engine.schedule(at + self.cc.rate_timer_period, _RATE,
                                 self._on_rate_timer, ch)

    def _on_emit(self, ch: Channel) -> None:
        flow = ch.active
        if flow is None:
            return
        psn = flow.emit_next
        flow.emit_next = psn + 1
        last = psn == flow.npackets
        size = flow.last_size if last else self.mtu
        pkt = Packet(flow, psn, size, last, ch.path)
        pkt.hop = 1
        now = self.engine.now()
        self._enqueue(ch.path[0], pkt, now)
        rs = ch.rate_state
        gap = math.ceil(size * 8_000_000_000 / rs.current_rate)
        ch.next_free = now + gap
        if self.cc.byte_counter_threshold:
            rs.byte_counter += size
            if rs.byte_counter >= self.cc.byte_counter_threshold:
                rs.byte_counter -= self.cc.byte_counter_threshold
                rate_increase_tick(rs, self.cc, ch.link_rate)
        if not last:
            self.engine.schedule(now + gap, _EMIT, self._on_emit, ch)
            return
        flow.emitted_at = now
        ch.active = None
        if ch.pending:
            self._activate_next(ch)
        if self.cfg.faults.retransmit and flow.completed_at is None:
            self.engine.schedule(now + self.cfg.faults.timeout, _FAULT,
                                 self._on_timeout, flow)

    def _on_timeout(self, flow: RuntimeFlow) -> None:
        """Go-Back-N stand-in: resume from the first PSN the receiver lacks."""
        if flow.completed_at is not None:
            return
        now = self.engine.now()
        ch = flow.channel
        if ch.active is not flow:
            flow.emit_next = flow.recv_contig + 1
            flow.retransmissions += 1
            self.retransmissions += 1
            if flow not in ch.pending:
                ch.pending.appendleft(flow)
            if ch.active is None:
                self._activate_next(ch)
        self.engine.schedule(now + self.cfg.faults.timeout, _FAULT,
                             self._on_timeout, flow)

    def _on_rate_timer(self, ch: Channel) -> None:
        if ch.active is None and not ch.pending:
            ch.timer_on = False
            return
        now = self.engine.now()
        rs = ch.rate_state
        cc = self.cc
        since_cnp = now - rs.last_cnp_at
        if since_cnp >= cc.alpha_decay_period:
            decay_cc_alpha(rs, cc)
        if since_cnp >= cc.rate_timer_period:
            rate_increase_tick(rs, cc, ch.link_rate)
        self.engine.schedule(now + cc.rate_timer_period, _RATE,
                             self._on_rate_timer, ch)

    def _on_cnp(self, ch: Channel) -> None:
        on_cnp(ch.rate_state, self.cc, self.engine.now())

    # -- fabric ------------------------------------------------------------

    def _enqueue(self, link, pkt: Packet, now: int) -> None:
        if self._link_drops:
            drops = self._link_drops.get(link.index)
            if drops is not None and self._check_drop(drops, pkt):
                return
        depth = link.depth + pkt.size
        link.depth = depth
        link.enqueued_bytes += pkt.size
        red = link.red
        if red is not None and depth >= red.k_min and not pkt.red_mark:
            if depth > red.k_max:
                p = 1.0
            else:
                p = red.p_max * (depth - red.k_min) / (red.k_max - red.k_min)
            if p >= 1.0 or self._red_random() < p:
                pkt.red_mark = True
                jid = pkt.flow.job_id
                self.red_marks[jid] = self.red_marks.get(jid, 0) + 1
        if self._pq and link.tracker is not None:
            block = link.tracker.blocks.get(pkt.flow.job_id)
            if block is not None and pkt.flow.step <= block.step_min:
                pkt.priority = 0
                link.queue_high.append(pkt)
            else:
                pkt.priority = 1
                link.queue.append(pkt)
        else:
            link.queue.append(pkt)
        if not link.busy:
            self._start_tx(link, now)

    def _check_drop(self, drops: list[_DropState], pkt: Packet) -> bool:
        flow = pkt.flow
        if flow.job is None:
            return False
        for st in drops:
            rule = st.rule
            if st.remaining <= 0 or flow.job_id != rule.job_id:
                continue
            if rule.step >= 0 and flow.step != rule.step:
                continue
            if rule.last_only:
                if not pkt.last:
                    continue
            elif rule.psn >= 0 and pkt.psn != rule.psn:
                continue
            st.remaining -= 1
            self.drops += 1
            job = flow.job
            d = job.inflight
            v = d[flow.step] - 1
            if v:
                d[flow.step] = v
            else:
                del d[flow.step]
            return True
        return False

    def _start_tx(self, link, now: int) -> None:
        if link.queue_high:
            pkt = link.queue_high.popleft()
        else:
            pkt = link.queue.popleft()
        link.depth -= pkt.size
        link.dequeued_bytes += pkt.size
        tracker = link.tracker
        if tracker is not None:
            flow = pkt.flow
            if tracker.on_dequeue(flow.job_id, flow.step, pkt.psn, pkt.last, now):
                pkt.ce = True
                jid = flow.job_id
                self.sym_marks[jid] = self.sym_marks.get(jid, 0) + 1
        if pkt.red_mark:
            pkt.ce = True
        if link.perturbations:
            rate = link.effective_rate(now)
            if isinstance(rate, int):
                ser = (pkt.size * 8_000_000_000 + rate - 1) // rate
            else:
                ser = math.ceil(pkt.size * 8_000_000_000 / rate)
        else:
            rate = link.rate
            ser = (pkt.size * 8_000_000_000 + rate - 1) // rate
        link.busy = True
        schedule = self.engine.schedule
        schedule(now + ser, _TX_DONE, self._on_tx_done, link)
        schedule(now + ser + link.latency, _ARRIVAL, self._on_arrival, pkt)

    def _on_tx_done(self, link) -> None:
        link.busy = False
        if link.queue_high or link.queue:
            self._start_tx(link, self.engine.now())

    def _on_arrival(self, pkt: Packet) -> None:
        path = pkt.path
        hop = pkt.hop
        if hop == len(path):
            self._deliver(pkt)
            return
        if hop == 1:
            job = pkt.flow.job
            if job is not None:
                d = job.inflight
                s = pkt.flow.step
                d[s] = d.get(s, 0) + 1
                if self.packet_events is not None:
                    self.packet_events.append(
                        ("enter", self.engine.now(), pkt.flow.job_id, s,
                         pkt.flow.fid, pkt.psn))
        pkt.hop = hop + 1
        self._enqueue(path[hop], pkt, self.engine.now())

    # -- receiver ----------------------------------------------------------

    def _deliver(self, pkt: Packet) -> None:
        flow = pkt.flow
        job = flow.job
        now = self.engine.now()
        if job is None:
            self.bg_delivered += 1
            return
        d = job.inflight
        s = flow.step
        v = d[s] - 1
        if v:
            d[s] = v
        else:
            del d[s]
        if self.packet_events is not None:
            self.packet_events.append(
                ("exit", now, flow.job_id, s, flow.fid, pkt.psn))
        if pkt.ce and flow.channel is not None:
            if now - flow.last_cnp_at >= self.cc.cnp_interval:
                flow.last_cnp_at = now
                self.engine.schedule(now + self.link_latency, _CNP,
                                     self._on_cnp, flow.channel)
        if pkt.psn == flow.recv_contig + 1:
            flow.recv_contig = pkt.psn
            if pkt.last and flow.completed_at is None:
                flow.completed_at = now
                self._flow_completed(flow, now)

    def _flow_completed(self, flow: RuntimeFlow, now: int) -> None:
        job = flow.job
        rem = job.step_remaining[flow.step] - 1
        if rem:
            job.step_remaining[flow.step] = rem
        else:
            del job.step_remaining[flow.step]
            job.step_completions.append(
                (now, flow.pass_idx, flow.step_in_pass, flow.step))
        prem = job.pass_remaining[flow.pass_idx] - 1
        job.pass_remaining[flow.pass_idx] = prem
        if prem == 0:
            job.pass_complete[flow.pass_idx] = now
            job.passes_left -= 1
            if job.passes_left == 0:
                job.done = True
                job.completed_at = now
        gap = job.compute_gap
        schedule = self.engine.schedule
        for dep in flow.dependents:
            dep.unmet -= 1
            if dep.unmet == 0:
                schedule(now + gap, _FLOW, self._on_flow_start, dep)

    # -- telemetry ---------------------------------------------------------

    def _on_sampler(self, job: JobRuntime) -> None:
        now = self.engine.now()
        job.overlap_samples.append((now, len(job.inflight)))
        if not job.done:
            nxt = now + self.sample_interval
            if nxt <= self.t_end:
                self.engine.schedule(nxt, _SAMPLER, self._on_sampler, job)

    # -- background --------------------------------------------------------

    def _on_bg_toggle(self, bg: BgSource) -> None:
        now = self.engine.now()
        if now >= self.t_end:
            return
        arr = self.rng.stream("arrivals")
        bgc = self.cfg.background
        bg.on = not bg.on
        if bg.on:
            self.engine.schedule(now, _EMIT, self._on_bg_emit, bg)
            hold = arr.expovariate(1.0 / bgc.mean_on)
        else:
            hold = arr.expovariate(1.0 / bgc.mean_off)
        self.engine.schedule(now + max(1, int(hold)), _FAULT,
                             self._on_bg_toggle, bg)

    def _on_bg_emit(self, bg: BgSource) -> None:
        if not bg.on:
            return
        now = self.engine.now()
        if now >= self.t_end:
            return
        bg.psn += 1
        pkt = Packet(bg.flow, bg.psn, bg.size, False, bg.path)
        pkt.hop = 1
        self._enqueue(bg.path[0], pkt, now)
        gap = math.ceil(bg.size * 8_000_000_000 / bg.rate)
        self.engine.schedule(now + gap, _EMIT, self._on_bg_emit, bg)

    # -- run ---------------------------------------------------------------

    def run(self) -> RunResult:
        self.engine.run_until(self.t_end)
        jobs_out: list[JobResult] = []
        for job in self.jobs:
            pass_ccts = []
            for p in range(job.spec.passes):
                if p in job.pass_complete and p in job.pass_started:
                    pass_ccts.append(job.pass_complete[p] - job.pass_started[p])
            final_flows = [f for f in job.flows if f.step == job.final_step]
            span = None
            if final_flows and all(f.completed_at is not None for f in final_flows):
                times = [f.completed_at for f in final_flows]
                span = max(times) - min(times)
            max_overlap = max((v for _, v in job.overlap_samples), default=0)
            jobs_out.append(JobResult(
                job_id=job.job_id,
                start_at=job.start_at,
                completed=job.done,
                jct=(job.completed_at - job.start_at) if job.done else None,
                pass_ccts=pass_ccts,
                max_overlap=max_overlap,
                final_step_span=span,
                red_marks=self.red_marks.get(job.job_id, 0),
                symphony_marks=self.sym_marks.get(job.job_id, 0),
                overlap_samples=job.overlap_samples,
                step_completions=job.step_completions,
                chunk_bytes=job.chunk_bytes,
                steps_per_pass=job.steps_per_pass,
                passes=job.spec.passes,
                link_rate=job.link_rate,
                flow_records=[
                    (f.fid, f.step,
                     f.started_at if f.started_at is not None else -1,
                     f.completed_at if f.completed_at is not None else -1,
                     f.retransmissions)
                    for f in job.flows],
            ))
        trajectories = None
        if self.cfg.run.log_trajectories and self.trackers:
            trajectories = {tr.name: tr.trajectory_log for tr in self.trackers
                            if tr.trajectory_log}
        return RunResult(
            seed=self.seed,
            truncated=any(not j.done for j in self.jobs),
            t_final=self.engine.now(),
            event_count=self.engine.dispatched,
            jobs=jobs_out,
            drops=self.drops,
            retransmissions=self.retransmissions,
            decisions=getattr(self, "decision_rows", None),
            trajectories=trajectories,
            packet_events=self.packet_events,
        )


def run_simulation(cfg: ScenarioConfig, seed: int) -> RunResult:
    """Build and run one seeded timeline."""
    return Simulation(cfg, seed).run()
