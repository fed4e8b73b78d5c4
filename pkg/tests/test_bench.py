import json

import numpy as np
import pytest

from labits.bench import REPRESENTATIONS, BenchConfig, builder, make_packets, run_bench
from labits.errors import BadConfig, DegenerateStream
from labits.events import EventStream, SensorGeometry
from labits.representations import LabitsConfig, VoxelConfig, build_labits, build_voxel_grid

SMALL = SensorGeometry(48, 32)


def test_zero_packets_rejected():
    with pytest.raises(BadConfig):
        BenchConfig(packet_count=0)


def test_packets_are_deterministic():
    cfg = BenchConfig(packet_count=2)
    a = make_packets(cfg, seed=3, geometry=SMALL)
    b = make_packets(cfg, seed=3, geometry=SMALL)
    assert all(x == y for x, y in zip(a, b))
    assert a[0] != a[1]
    assert a[0] != make_packets(cfg, seed=4, geometry=SMALL)[0]
    assert all(p.t.max() <= 100_000 for p in a)


def test_report_rows_and_formats():
    cfg = BenchConfig(packet_count=3, repeats=1, warmup=0, labits_bins=9, voxel_bins=9)
    report = run_bench(make_packets(cfg, geometry=SMALL), cfg)
    assert [r.name for r in report.rows] == list(REPRESENTATIONS)
    assert all(r.mode == "serial" and r.mean_s > 0 and r.p95_s >= r.median_s for r in report.rows)
    records = [json.loads(line) for line in report.to_json_lines().splitlines()]
    assert [r["name"] for r in records] == list(REPRESENTATIONS)
    assert set(records[0]) >= {"name", "mean_s", "median_s", "p95_s", "events_per_s"}
    table = report.to_table()
    assert "machine:" in table and all(name in table for name in REPRESENTATIONS)


def test_parallel_mode_adds_rows_and_matches_serial():
    cfg = BenchConfig(packet_count=2, repeats=1, warmup=0, labits_bins=7, voxel_bins=7, workers=3)
    packets = make_packets(cfg, geometry=SMALL)
    report = run_bench(packets, cfg, collect=True)
    assert {r.name for r in report.rows if r.mode == "parallel"} == {"labits", "voxel"}
    for name in ("labits", "voxel"):
        for a, b in zip(report.outputs[name], report.outputs[f"{name}[parallel]"]):
            assert np.array_equal(a, b)


def test_bench_outputs_equal_standalone_builds():
    cfg = BenchConfig(packet_count=2, repeats=2, warmup=1, labits_bins=5, voxel_bins=5)
    packets = make_packets(cfg, geometry=SMALL)
    report = run_bench(packets, cfg, collect=True)
    for p, out in zip(packets, report.outputs["labits"]):
        assert np.array_equal(out, build_labits(p, LabitsConfig(5)))
    for p, out in zip(packets, report.outputs["voxel"]):
        assert np.array_equal(out, build_voxel_grid(p, VoxelConfig(5)))


def test_degenerate_packet_rejected():
    cfg = BenchConfig(packet_count=1)
    lone = EventStream(SMALL, [5], [0], [0], [1])
    with pytest.raises(DegenerateStream):
        run_bench([lone], cfg)


def test_unknown_representation():
    with pytest.raises(BadConfig):
        BenchConfig(representations=("labits", "hats"))
    with pytest.raises(BadConfig):
        builder("hats", BenchConfig())
