"""Generation-time benchmark for the six representation builders.

Every builder sees the same packets. Each call is timed with a monotonic
clock and includes output allocation. Per packet we keep the median of the
repeats; statistics are taken over packets.
"""

from __future__ import annotations

import json
import os
import platform
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List

import numpy as np

from .errors import BadConfig
from .events import EventStream, SensorGeometry, TimeWindow, natural_window
from .representations import (
    LabitsConfig,
    ToreConfig,
    VoxelConfig,
    build_event_count,
    build_event_frame,
    build_labits,
    build_time_surface,
    build_tore,
    build_voxel_grid,
)
from .synth import ConstantVelocity, HotPixel, PointCloud, SceneObject, SyntheticScene, VerticalEdge, emit_events

REPRESENTATIONS = ("labits", "voxel", "tore", "time_surface", "event_frame", "event_count")
PARALLEL_CAPABLE = ("labits", "voxel")


@dataclass(frozen=True)
class BenchConfig:
    packet_count: int = 50
    packet_duration_us: int = 100_000
    repeats: int = 3
    warmup: int = 1
    labits_bins: int = 65
    voxel_bins: int = 65
    tore_depth: int = 3
    workers: int = 1
    representations: tuple = REPRESENTATIONS

    def __post_init__(self):
        if self.packet_count < 1:
            raise BadConfig(f"packet_count must be at least 1, got {self.packet_count}")
        if self.repeats < 1:
            raise BadConfig(f"repeats must be at least 1, got {self.repeats}")
        if self.warmup < 0:
            raise BadConfig("warmup cannot be negative")
        unknown = set(self.representations) - set(REPRESENTATIONS)
        if unknown:
            raise BadConfig(f"unknown representations {sorted(unknown)}")


@dataclass
class BenchRow:
    name: str
    mode: str
    mean_s: float
    median_s: float
    p95_s: float
    events_per_s: float


@dataclass
class BenchReport:
    rows: List[BenchRow]
    config: BenchConfig
    machine: str
    packets: int
    total_events: int
    outputs: Dict[str, list] = field(default_factory=dict, repr=False)

    def row(self, name, mode="serial"):
        for r in self.rows:
            if r.name == name and r.mode == mode:
                return r
        raise KeyError((name, mode))

    def to_json_lines(self):
        return "\n".join(json.dumps(asdict(r)) for r in self.rows) + "\n"

    def to_table(self):
        head = [
            f"# machine: {self.machine}",
            f"# packets: {self.packets}, events: {self.total_events}, "
            f"repeats: {self.config.repeats}, labits B={self.config.labits_bins}, "
            f"voxel B={self.config.voxel_bins}, TORE K={self.config.tore_depth}",
        ]
        cols = ("representation", "mode", "mean_s", "median_s", "p95_s", "events/s")
        lines = [f"{cols[0]:<16} {cols[1]:<9} {cols[2]:>10} {cols[3]:>10} {cols[4]:>10} {cols[5]:>14}"]
        for r in self.rows:
            lines.append(
                f"{r.name:<16} {r.mode:<9} {r.mean_s:>10.5f} {r.median_s:>10.5f} "
                f"{r.p95_s:>10.5f} {r.events_per_s:>14.0f}"
            )
        return "\n".join(head + lines) + "\n"


def machine_descriptor():
    return f"{platform.platform()} | {platform.processor() or platform.machine()} | cpus={os.cpu_count()} | python {platform.python_version()}"


def builder(name, config: BenchConfig, workers=1):
    """A one-argument callable building representation ``name`` on its natural window."""
    if name == "labits":
        cfg = LabitsConfig(config.labits_bins)
        return lambda s: build_labits(s, cfg, workers)
    if name == "voxel":
        cfg = VoxelConfig(config.voxel_bins)
        return lambda s: build_voxel_grid(s, cfg, workers)
    if name == "tore":
        cfg = ToreConfig(config.tore_depth)
        return lambda s: build_tore(s, cfg)
    if name == "time_surface":
        return lambda s: build_time_surface(s)
    if name == "event_frame":
        return build_event_frame
    if name == "event_count":
        return build_event_count
    raise BadConfig(f"unknown representation {name!r}")


def make_packets(config: BenchConfig, seed=0, geometry=SensorGeometry(240, 180)) -> List[EventStream]:
    """Synthetic packets: two moving edges, a moving point cloud and hot pixels."""
    packets = []
    for i in range(config.packet_count):
        rng = np.random.default_rng([seed, i])
        w, h = geometry.width, geometry.height

        def speed():
            return float(rng.choice([-1, 1]) * rng.uniform(50, 300))

        objects = [
            SceneObject(VerticalEdge(float(rng.uniform(0.3 * w, 0.7 * w))), ConstantVelocity(speed(), 0.0)),
            SceneObject(VerticalEdge(float(rng.uniform(0.3 * w, 0.7 * w))), ConstantVelocity(speed(), 0.0)),
            SceneObject(
                PointCloud(tuple(map(tuple, rng.uniform([0, 0], [w, h], size=(1500, 2))))),
                ConstantVelocity(speed(), speed()),
            ),
        ]
        hot = tuple(
            HotPixel(int(rng.integers(w)), int(rng.integers(h)), 2000.0) for _ in range(3)
        )
        scene = SyntheticScene(geometry, TimeWindow(0, config.packet_duration_us), tuple(objects), hot)
        packets.append(emit_events(scene, seed=seed * 1_000_003 + i))
    return packets


def _time_builder(fn, streams, config, collect):
    per_packet = []
    outputs = []
    for s in streams:
        for _ in range(config.warmup):
            fn(s)
        samples = []
        for _ in range(config.repeats):
            t0 = time.perf_counter()
            out = fn(s)
            samples.append(time.perf_counter() - t0)
        per_packet.append(float(np.median(samples)))
        if collect:
            outputs.append(out)
    return np.asarray(per_packet), outputs


def run_bench(streams: List[EventStream], config: BenchConfig, collect=False) -> BenchReport:
    """Time every configured builder on every stream.

    With ``collect`` the last output per packet is kept in ``report.outputs``
    keyed by ``name`` (serial) or ``name[parallel]``.
    """
    if not streams:
        raise BadConfig("no packets to benchmark")
    for s in streams:
        natural_window(s)
    total_events = sum(len(s) for s in streams)

    modes = [("serial", 1)]
    if config.workers > 1:
        modes.append(("parallel", config.workers))

    rows, outputs = [], {}
    for mode, workers in modes:
        for name in config.representations:
            if mode == "parallel" and name not in PARALLEL_CAPABLE:
                continue
            times, outs = _time_builder(builder(name, config, workers), streams, config, collect)
            rows.append(
                BenchRow(
                    name=name,
                    mode=mode,
                    mean_s=float(times.mean()),
                    median_s=float(np.median(times)),
                    p95_s=float(np.percentile(times, 95)),
                    events_per_s=float(total_events / times.sum()) if times.sum() > 0 else float("inf"),
                )
            )
            if collect:
                outputs[name if mode == "serial" else f"{name}[parallel]"] = outs
    return BenchReport(rows, config, machine_descriptor(), len(streams), total_events, outputs)
