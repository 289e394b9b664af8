"""Scenario file parsing, defaults, overrides, serialization round-trip."""
from __future__ import annotations

import pytest

from ringsim.config import (ConfigError, apply_overrides, config_hash,
                            load_config, load_defaults_dict,
                            parse_config_dict, serialize_config)

if True:  # tomllib (3.11+) or tomli
    import sys
    if sys.version_info >= (3, 11):
        import tomllib
    else:
        import tomli as tomllib


def write(tmp_path, text):
    path = tmp_path / "scenario.toml"
    path.write_text(text)
    return path


def test_defaults_materialize_table_values():
    cfg = parse_config_dict(load_defaults_dict())
    assert cfg.fabric.tors == 4 and cfg.fabric.spines == 4
    assert cfg.fabric.link_rate == 10_000_000_000
    assert cfg.red.k_min == 50 * 1024 and cfg.red.k_max == 100 * 1024
    assert cfg.red.p_max == 0.2
    assert cfg.tracker.params.k == 0.01
    assert cfg.tracker.params.tau == 0.25
    assert cfg.tracker.params.t_win == 100_000
    assert cfg.workload.chunk_bytes == 8 << 20
    assert cfg.cc.mtu == 1024


def test_user_file_overrides_defaults(tmp_path):
    path = write(tmp_path, """
[fabric]
routing = "balanced"
[workload]
hosts = 8
rings = 1
chunk_bytes = 524288
[run]
seeds = [3, 4]
t_end_ms = 50.0
""")
    cfg = load_config(path)
    assert cfg.fabric.routing == "balanced"
    assert cfg.fabric.tors == 4  # default retained
    assert cfg.workload.hosts == 8
    assert cfg.run.seeds == (3, 4)
    assert cfg.run.t_end == 50_000_000


def test_unknown_key_names_offender(tmp_path):
    path = write(tmp_path, "[fabric]\nspines = 4\nspine_count = 2\n")
    with pytest.raises(ConfigError, match=r"\[fabric\].spine_count"):
        load_config(path)


def test_bad_value_type_names_offender(tmp_path):
    path = write(tmp_path, '[symphony]\nk = "high"\n')
    with pytest.raises(ConfigError, match=r"\[symphony\].k"):
        load_config(path)


def test_invalid_seed_list(tmp_path):
    path = write(tmp_path, "[run]\nseeds = []\n")
    with pytest.raises(ConfigError, match=r"\[run\].seeds"):
        load_config(path)


def test_t_end_must_be_positive(tmp_path):
    path = write(tmp_path, "[run]\nt_end_ms = 0\n")
    with pytest.raises(ConfigError, match="t_end_ms"):
        load_config(path)


def test_overrides_apply_after_merge(tmp_path):
    path = write(tmp_path, "[symphony]\nenable = false\n")
    cfg = load_config(path, ["symphony.enable=true", "symphony.k=0.001"])
    assert cfg.tracker.enable is True
    assert cfg.tracker.params.k == 0.001


def test_override_parse_errors():
    with pytest.raises(ConfigError):
        apply_overrides({}, ["no_equals_sign"])
    with pytest.raises(ConfigError):
        apply_overrides({}, ["a.b=not a toml value ["])


def test_round_trip_is_semantically_identical(tmp_path):
    path = write(tmp_path, """
name = "trip"
[fabric]
scheduling = "strict-priority"
[workload]
type = "ring2d"
dim_a = 4
dim_b = 2
chunk_bytes = 131072
passes = 3
[[perturbations]]
link = "spine0->tor1"
capacity_multiplier = 0.885
[faults]
retransmit = true
[[faults.drops]]
switch = "core0"
step = 5
psn = "last"
[run]
seeds = [1, 2]
t_end_ms = 10.0
log_decisions = true
""")
    cfg = load_config(path)
    text = serialize_config(cfg)
    cfg2 = parse_config_dict(tomllib.loads(text), name=cfg.name)
    assert cfg2 == cfg
    assert config_hash(cfg2) == config_hash(cfg)


def test_round_trip_covers_stream_and_jobs(tmp_path):
    path = write(tmp_path, """
[workload]
type = "stream"
count = 4
scales = [8, 16]
collective_mib = [4]
max_concurrency = 2
""")
    cfg = load_config(path)
    cfg2 = parse_config_dict(tomllib.loads(serialize_config(cfg)), cfg.name)
    assert cfg2 == cfg

    path2 = write(tmp_path, """
[workload]
type = "jobs"
[[workload.jobs]]
type = "multi_1d"
hosts = 16
rings = 4
chunk_bytes = 1048576
[[workload.jobs]]
type = "multi_1d"
hosts = 16
rings = 4
chunk_bytes = 1048576
start_us = 500000.0
""")
    cfg = load_config(path2)
    jobs = cfg.build_jobs(seed=1)
    assert len(jobs) == 2
    assert jobs[1].start_at == 500_000_000
    cfg2 = parse_config_dict(tomllib.loads(serialize_config(cfg)), cfg.name)
    assert cfg2 == cfg


def test_workload_host_bound_checked(tmp_path):
    path = write(tmp_path, "[workload]\nhosts = 64\nrings = 8\n")
    cfg = load_config(path)
    with pytest.raises(ConfigError, match="host"):
        cfg.build_jobs(seed=1)


def test_config_hash_stable_and_sensitive(tmp_path):
    p1 = write(tmp_path, "[symphony]\nenable = true\n")
    cfg1 = load_config(p1)
    cfg1b = load_config(p1)
    assert config_hash(cfg1) == config_hash(cfg1b)
    p2 = tmp_path / "other.toml"
    p2.write_text("[symphony]\nenable = true\nk = 0.02\n")
    assert config_hash(load_config(p2)) != config_hash(cfg1)


def test_missing_file_is_config_error():
    with pytest.raises(ConfigError, match="not found"):
        load_config("/nonexistent/path.toml")


def test_unknown_workload_type(tmp_path):
    path = write(tmp_path, '[workload]\ntype = "butterfly"\n')
    with pytest.raises(ConfigError, match="butterfly"):
        load_config(path)
