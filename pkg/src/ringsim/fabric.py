"""Leaf-spine fabric model: switches, links, egress queues, routing, RED.

Topology is the standard two-tier leaf-spine: every host has one uplink to
its ToR and every ToR connects to every spine in its pod. Multi-pod builds
add a core layer; spine-to-core uplink capacity is scaled so the declared
oversubscription ratio holds. Each directed link owns its egress queue;
queues are lossless by default (the capacity is accounting-only) and RED
evaluates the instantaneous post-enqueue depth.
"""
from __future__ import annotations

from dataclasses import dataclass, field


class FabricError(ValueError):
    """Raised for specs that cannot produce a connected fabric."""


@dataclass(frozen=True)
class RedParams:
    """Classic RED marking ramp over instantaneous queue depth (bytes)."""

    k_min: int = 50 * 1024
    k_max: int = 100 * 1024
    p_max: float = 0.2

    def __post_init__(self) -> None:
        if not self.k_min < self.k_max:
            raise ValueError(f"k_min ({self.k_min}) must be < k_max ({self.k_max})")
        if not (0 < self.p_max <= 1):
            raise ValueError(f"p_max must be in (0, 1], got {self.p_max}")


def red_mark_probability(depth: int, red: RedParams) -> float:
    """0 below k_min, linear ramp to p_max at k_max, 1 above k_max."""
    if depth < red.k_min:
        return 0.0
    if depth > red.k_max:
        return 1.0
    return red.p_max * (depth - red.k_min) / (red.k_max - red.k_min)


@dataclass(frozen=True)
class LinkPerturbation:
    """Capacity scaling of one link inside a time window.

    A load skew of r on a hop is modeled as serializing at rate/r, which
    reproduces the skew deterministically instead of entangling it with
    routing randomness. Overlapping perturbations compose multiplicatively.
    """

    link: str
    capacity_multiplier: float
    start: int = 0
    end: int = 1 << 62

    def __post_init__(self) -> None:
        if not (0 < self.capacity_multiplier <= 1):
            raise ValueError(
                f"capacity_multiplier must be in (0, 1], got {self.capacity_multiplier}")


@dataclass(frozen=True)
class FabricSpec:
    tors: int = 4                 # per pod
    spines: int = 4               # per pod
    cores: int = 0                # shared across pods; required when pods > 1
    hosts_per_tor: int = 8
    pods: int = 1
    link_rate: int = 10_000_000_000   # bits/s
    link_latency: int = 1_000         # ns, per hop
    oversubscription: float = 1.0     # spine downlink aggregate / core uplink aggregate
    scheduling: str = "fifo"          # "fifo" | "strict-priority"
    routing: str = "ecmp"             # "ecmp" | "balanced"
    queue_capacity: int = 64 * 1024 * 1024

    def __post_init__(self) -> None:
        if self.tors < 1 or self.hosts_per_tor < 1 or self.pods < 1:
            raise FabricError("tors, hosts_per_tor and pods must all be >= 1")
        if self.spines < 0 or self.cores < 0:
            raise FabricError("spines and cores cannot be negative")
        if self.spines == 0 and (self.tors > 1 or self.pods > 1):
            raise FabricError("no spines: fabric is disconnected beyond a single ToR")
        if self.pods > 1 and self.cores == 0:
            raise FabricError("multi-pod fabric needs at least one core switch")
        if self.oversubscription < 1.0:
            raise FabricError("oversubscription ratio must be >= 1")
        if self.scheduling not in ("fifo", "strict-priority"):
            raise FabricError(f"unknown scheduling {self.scheduling!r}")
        if self.routing not in ("ecmp", "balanced"):
            raise FabricError(f"unknown routing {self.routing!r}")

    @property
    def host_count(self) -> int:
        return self.pods * self.tors * self.hosts_per_tor


HOST = 0
TOR = 1
SPINE = 2
CORE = 3


class Node:
    __slots__ = ("index", "name", "kind", "pod")

    def __init__(self, index: int, name: str, kind: int, pod: int):
        self.index = index
        self.name = name
        self.kind = kind
        self.pod = pod

    @property
    def is_switch(self) -> bool:
        return self.kind != HOST

    def __repr__(self) -> str:
        return f"Node({self.name})"


class Link:
    """Directed link; the queue lives at its source's egress port.

    ``depth`` counts queued bytes only (the packet in transmission has
    already been dequeued). ``red`` is set on switch egress ports; host
    uplinks neither RED-mark nor run the tracker. ``tracker`` is attached by
    the simulation when progress tracking is enabled for the source switch.
    """

    __slots__ = ("index", "name", "src", "dst", "rate", "latency", "capacity",
                 "queue", "queue_high", "depth", "busy", "red", "tracker",
                 "perturbations", "enqueued_bytes", "dequeued_bytes")

    def __init__(self, index: int, src: Node, dst: Node, rate: int,
                 latency: int, capacity: int):
        self.index = index
        self.name = f"{src.name}->{dst.name}"
        self.src = src
        self.dst = dst
        self.rate = rate
        self.latency = latency
        self.capacity = capacity
        self.queue: list = []          # FIFO via collections.deque, set below
        self.queue_high: list = []
        self.depth = 0
        self.busy = False
        self.red: RedParams | None = None
        self.tracker = None
        self.perturbations: list[LinkPerturbation] = []
        self.enqueued_bytes = 0
        self.dequeued_bytes = 0

    def effective_rate(self, now: int) -> float | int:
        """Link rate under the perturbations active at ``now``."""
        if not self.perturbations:
            return self.rate
        m = 1.0
        for p in self.perturbations:
            if p.start <= now < p.end:
                m *= p.capacity_multiplier
        if m == 1.0:
            return self.rate
        return self.rate * m

    def __repr__(self) -> str:
        return f"Link({self.name})"


def ecmp_select(five_tuple: tuple, path_count: int, seed: int = 0) -> int:
    """Stable equal-cost path choice: hash of the flow tuple and run seed.

    The same tuple always maps to the same index within a run; different run
    seeds reshuffle collisions. FNV-1a accumulates the fields and a 64-bit
    avalanche finalizer de-correlates the low bits (raw FNV cycles mod small
    path counts on sequentially numbered flows).
    """
    if path_count < 1:
        raise ValueError("path_count must be >= 1")
    mask = 0xFFFFFFFFFFFFFFFF
    h = 0xCBF29CE484222325
    for value in (seed, *five_tuple):
        v = value & mask
        for _ in range(8):
            h ^= v & 0xFF
            h = (h * 0x100000001B3) & mask
            v >>= 8
    h ^= h >> 33
    h = (h * 0xFF51AFD7ED558CCD) & mask
    h ^= h >> 33
    h = (h * 0xC4CEB9FE1A85EC53) & mask
    h ^= h >> 33
    return h % path_count


class Fabric:
    """Built topology with routing tables and per-pair equal-cost path sets."""

    def __init__(self, spec: FabricSpec, ecmp_seed: int = 0):
        from collections import deque

        self.spec = spec
        self.ecmp_seed = ecmp_seed
        self.nodes: list[Node] = []
        self.hosts: list[Node] = []
        self.tors: list[list[Node]] = []    # per pod
        self.spines: list[list[Node]] = []  # per pod
        self.cores: list[Node] = []
        self.links: list[Link] = []
        self.link_by_name: dict[str, Link] = {}
        self._uplink: dict[int, Link] = {}           # host index -> host->tor
        self._downlink: dict[int, Link] = {}         # host index -> tor->host
        self._pair_links: dict[tuple[int, int], Link] = {}  # (src node, dst node)
        self._paths_cache: dict[tuple[int, int], list[tuple[Link, ...]]] = {}
        self._balanced_counters: dict[tuple[int, int], int] = {}

        def add_node(name: str, kind: int, pod: int) -> Node:
            node = Node(len(self.nodes), name, kind, pod)
            self.nodes.append(node)
            return node

        def add_link(src: Node, dst: Node, rate: int) -> Link:
            link = Link(len(self.links), src, dst, rate,
                        spec.link_latency, spec.queue_capacity)
            link.queue = deque()
            link.queue_high = deque()
            self.links.append(link)
            self.link_by_name[link.name] = link
            self._pair_links[(src.index, dst.index)] = link
            return link

        for pod in range(spec.pods):
            pod_tors = []
            for t in range(spec.tors):
                label = f"tor{pod * spec.tors + t}"
                pod_tors.append(add_node(label, TOR, pod))
            self.tors.append(pod_tors)
            pod_spines = []
            for s in range(spec.spines):
                label = f"spine{pod * spec.spines + s}"
                pod_spines.append(add_node(label, SPINE, pod))
            self.spines.append(pod_spines)
        for c in range(spec.cores):
            self.cores.append(add_node(f"core{c}", CORE, -1))
        for pod in range(spec.pods):
            for tor in self.tors[pod]:
                for i in range(spec.hosts_per_tor):
                    host = add_node(f"host{len(self.hosts)}", HOST, pod)
                    self.hosts.append(host)
                    self._uplink[len(self.hosts) - 1] = add_link(host, tor, spec.link_rate)
                    self._downlink[len(self.hosts) - 1] = add_link(tor, host, spec.link_rate)

        for pod in range(spec.pods):
            for tor in self.tors[pod]:
                for spine in self.spines[pod]:
                    add_link(tor, spine, spec.link_rate)
                    add_link(spine, tor, spec.link_rate)

        if spec.pods > 1:
            # Spine uplink aggregate = downlink aggregate / oversubscription.
            up_rate = int(spec.tors * spec.link_rate
                          / (spec.cores * spec.oversubscription))
            for pod in range(spec.pods):
                for spine in self.spines[pod]:
                    for core in self.cores:
                        add_link(spine, core, up_rate)
                        add_link(core, spine, up_rate)

    # -- routing ---------------------------------------------------------

    def host(self, index: int) -> Node:
        return self.hosts[index]

    def tor_of(self, host_index: int) -> Node:
        spec = self.spec
        pod, rem = divmod(host_index, spec.tors * spec.hosts_per_tor)
        return self.tors[pod][rem // spec.hosts_per_tor]

    def paths(self, src_host: int, dst_host: int) -> list[tuple[Link, ...]]:
        """All equal-cost paths between two hosts, as link sequences."""
        if src_host == dst_host:
            raise FabricError("src and dst host coincide")
        key = (src_host, dst_host)
        cached = self._paths_cache.get(key)
        if cached is not None:
            return cached
        up = self._uplink[src_host]
        down = self._downlink[dst_host]
        src_tor = self.tor_of(src_host)
        dst_tor = self.tor_of(dst_host)
        pair = self._pair_links
        out: list[tuple[Link, ...]] = []
        if src_tor is dst_tor:
            out.append((up, down))
        elif src_tor.pod == dst_tor.pod:
            for spine in self.spines[src_tor.pod]:
                out.append((up,
                            pair[(src_tor.index, spine.index)],
                            pair[(spine.index, dst_tor.index)],
                            down))
        else:
            for s1 in self.spines[src_tor.pod]:
                for core in self.cores:
                    for s2 in self.spines[dst_tor.pod]:
                        out.append((up,
                                    pair[(src_tor.index, s1.index)],
                                    pair[(s1.index, core.index)],
                                    pair[(core.index, s2.index)],
                                    pair[(s2.index, dst_tor.index)],
                                    down))
        self._paths_cache[key] = out
        return out

    def select_path(self, src_host: int, dst_host: int,
                    five_tuple: tuple) -> tuple[Link, ...]:
        """Pick one equal-cost path: hashed (ecmp) or round-robin (balanced).

        Balanced assignment spreads consecutive selections for the same ToR
        pair across the path set deterministically, the stand-in for an
        ideal static routing plan.
        """
        options = self.paths(src_host, dst_host)
        if len(options) == 1:
            return options[0]
        if self.spec.routing == "ecmp":
            return options[ecmp_select(five_tuple, len(options), self.ecmp_seed)]
        key = (self.tor_of(src_host).index, self.tor_of(dst_host).index)
        n = self._balanced_counters.get(key, 0)
        self._balanced_counters[key] = n + 1
        return options[n % len(options)]

    # -- perturbations ----------------------------------------------------

    def apply_perturbation(self, pert: LinkPerturbation) -> None:
        link = self.link_by_name.get(pert.link)
        if link is None:
            raise FabricError(f"perturbation targets unknown link {pert.link!r}")
        link.perturbations.append(pert)

    # -- introspection ----------------------------------------------------

    def switch_links(self) -> list[Link]:
        """Egress links whose source is a switch (RED/tracking attach here)."""
        return [ln for ln in self.links if ln.src.kind != HOST]

    def aggregate_rates(self) -> dict[str, int]:
        """Total capacity by link class; used for oversubscription audits."""
        out = {"host_up": 0, "tor_up": 0, "spine_up": 0, "spine_down": 0}
        for ln in self.links:
            if ln.src.kind == HOST:
                out["host_up"] += ln.rate
            elif ln.src.kind == TOR and ln.dst.kind == SPINE:
                out["tor_up"] += ln.rate
            elif ln.src.kind == SPINE and ln.dst.kind == CORE:
                out["spine_up"] += ln.rate
            elif ln.src.kind == SPINE and ln.dst.kind == TOR:
                out["spine_down"] += ln.rate
        return out


def build_fabric(spec: FabricSpec, ecmp_seed: int = 0) -> Fabric:
    """Construct the fabric; raises FabricError for disconnected specs."""
    return Fabric(spec, ecmp_seed)
