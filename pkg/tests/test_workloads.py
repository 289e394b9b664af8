"""Ring job generation: flow counts, dependencies, placement, streams."""
from __future__ import annotations

from collections import defaultdict

import pytest

from ringsim.workloads import (JobSpec, JobStreamSpec, RingSpec, build_flows,
                               generate_2d_ring, generate_job_stream,
                               generate_multi_1d_rings, theoretical_cct)


def test_four_hosts_one_ring_flow_count():
    job = generate_multi_1d_rings(4, 1, 1 << 20, passes=1)
    flows = build_flows(job)
    assert len(flows) == 24  # 4 flows per step x 2(4-1) steps
    assert job.steps_per_pass == 6


def test_round_robin_placement_crosses_tor_groups():
    job = generate_multi_1d_rings(32, 8, 1 << 20, passes=1, tors=4)
    per = 32 // 4
    tor_of = lambda h: h // per
    for ring in job.rings:
        members = ring.members
        for i, src in enumerate(members):
            assert tor_of(src) != tor_of(members[(i + 1) % len(members)])
    # the first ring follows the one-host-per-group pattern
    assert job.rings[0].members == (0, 8, 16, 24)


def test_dependency_closure_acyclic_single_predecessor():
    job = generate_multi_1d_rings(16, 4, 512 * 1024, passes=3, tors=4)
    flows = build_flows(job)
    indegree = {}
    for f in flows:
        assert len(f.depends_on) <= 1
        if f.step > 0:
            assert len(f.depends_on) == 1
        indegree[f.flow_id] = len(f.depends_on)
    # topological consumption proves acyclicity
    dependents = defaultdict(list)
    for f in flows:
        for d in f.depends_on:
            dependents[d].append(f.flow_id)
    ready = [fid for fid, deg in indegree.items() if deg == 0]
    seen = 0
    while ready:
        fid = ready.pop()
        seen += 1
        for nxt in dependents[fid]:
            indegree[nxt] -= 1
            if indegree[nxt] == 0:
                ready.append(nxt)
    assert seen == len(flows)


def test_dependency_links_recv_to_next_send():
    job = generate_multi_1d_rings(4, 1, 1 << 20, passes=1)
    flows = {f.flow_id: f for f in build_flows(job)}
    members = job.rings[0].members
    for f in flows.values():
        if not f.depends_on:
            continue
        dep = flows[f.depends_on[0]]
        assert dep.step == f.step - 1
        assert dep.dst == f.src
        i = members.index(f.src)
        assert dep.src == members[(i - 1) % len(members)]


def test_uniform_bytes_and_global_step_numbering():
    job = generate_multi_1d_rings(8, 2, 777_777, passes=3)
    flows = build_flows(job)
    assert {f.nbytes for f in flows} == {777_777}
    for f in flows:
        assert f.step == f.pass_idx * job.steps_per_pass + f.step_in_pass


def test_2d_ring_8x4_phase_structure():
    job = generate_2d_ring(8, 4, 1 << 20, passes=1)
    rows = [r for r in job.rings if r.phase == 0]
    cols = [r for r in job.rings if r.phase == 1]
    assert len(rows) == 4 and all(len(r.members) == 8 for r in rows)
    assert len(cols) == 8 and all(len(r.members) == 4 for r in cols)
    assert job.steps_per_pass == 2 * 7 + 2 * 3


def test_2d_phase_boundary_dependencies():
    job = generate_2d_ring(4, 2, 1 << 20, passes=1)
    flows = {f.flow_id: f for f in build_flows(job)}
    phase1_first = [f for f in flows.values()
                    if f.step_in_pass == 2 * (4 - 1) and f.depends_on]
    assert phase1_first
    for f in phase1_first:
        dep = flows[f.depends_on[0]]
        assert dep.dst == f.src
        assert dep.step == f.step - 1


def test_1xn_degenerates_to_single_ring():
    job = generate_2d_ring(1, 6, 1 << 20, passes=1)
    assert len(job.rings) == 1
    assert len(job.rings[0].members) == 6
    assert job.steps_per_pass == 10


def test_2d_bytes_per_node_per_phase():
    chunk = 1 << 20
    job = generate_2d_ring(8, 4, chunk, passes=1)
    flows = build_flows(job)
    sent = defaultdict(lambda: defaultdict(int))
    phase_of_ring = {r.ring_id: r.phase for r in job.rings}
    for f in flows:
        sent[phase_of_ring[f.ring_id]][f.src] += f.nbytes
    for host, nbytes in sent[0].items():
        assert nbytes == 2 * (8 - 1) * chunk
    for host, nbytes in sent[1].items():
        assert nbytes == 2 * (4 - 1) * chunk


def test_invalid_partitions_raise():
    with pytest.raises(ValueError):
        generate_multi_1d_rings(10, 3, 1 << 20, 1)
    with pytest.raises(ValueError):
        generate_multi_1d_rings(8, 8, 1 << 20, 1)  # ring size 1
    with pytest.raises(ValueError):
        generate_2d_ring(3, 4, 1 << 20, 1, hosts=range(10))


def test_theoretical_cct_hand_computed():
    # 2(N-1) * 8C/B: N=4, C=1e6 bytes, B=10 Gb/s -> 6 * 0.8 ms
    assert theoretical_cct(4, 1_000_000, 10_000_000_000) == 4_800_000
    chunk = 512 * 1024
    assert theoretical_cct(2, chunk, 10_000_000_000) == 2 * chunk * 8 * 10 ** 9 // 10 ** 10
    with pytest.raises(ValueError):
        theoretical_cct(1, 1_000_000, 10_000_000_000)


def test_job_stream_fixed_offset_two_jobs():
    spec = JobStreamSpec(count=2, host_pool=32, scales=(16,),
                         collective_bytes=(4 << 20,), passes_range=(8, 8),
                         arrival_process="fixed", arrival_param=500_000_000,
                         seed=1)
    jobs = generate_job_stream(spec)
    assert len(jobs) == 2
    assert jobs[0].start_at == 0
    assert jobs[1].start_at - jobs[0].start_at == 500_000_000
    assert jobs[0].chunk_bytes == jobs[1].chunk_bytes


def test_job_stream_concurrency_cap_one_is_sequential():
    spec = JobStreamSpec(count=6, host_pool=64, max_concurrency=1,
                         arrival_process="poisson", arrival_param=1_000_000,
                         seed=3)
    jobs = generate_job_stream(spec)
    est_end = 0
    for job in jobs:
        assert job.start_at >= est_end
        est_end = job.start_at + 2 * job.passes * theoretical_cct(
            spec.ring_size, job.chunk_bytes, spec.link_rate)


def test_job_stream_deterministic():
    spec = JobStreamSpec(count=50, host_pool=128, seed=42)
    a = generate_job_stream(spec)
    b = generate_job_stream(spec)
    assert [(j.start_at, j.hosts, j.chunk_bytes, j.passes) for j in a] == \
           [(j.start_at, j.hosts, j.chunk_bytes, j.passes) for j in b]


def test_job_spec_validation():
    with pytest.raises(ValueError):
        JobSpec(0, (0, 1), (RingSpec(0, 0, (0, 1, 0)),), 1024, 1)
    with pytest.raises(ValueError):
        JobSpec(0, (0, 1, 2, 3),
                (RingSpec(0, 0, (0, 1)), RingSpec(1, 0, (2, 3, 0))), 1024, 1)


def test_job_spec_config_round_trip_fields():
    job = generate_multi_1d_rings(8, 2, 1 << 20, passes=2, start_at=5_000_000)
    data = job.to_config()
    assert data["chunk_bytes"] == 1 << 20
    assert data["passes"] == 2
    assert len(data["rings"]) == 2
    assert data["start_us"] == 5_000
