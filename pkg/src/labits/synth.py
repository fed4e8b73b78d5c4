"""Synthetic moving scenes with exact events and exact ground truth.

The event model is ideal: a tracked point fires one +1 event each time its
position crosses an integer pixel line, at the crossing time rounded to the
nearest microsecond. Motion is given as a displacement from the window start,
so ground-truth flows and trajectories are closed-form.

Hot pixels fire a Poisson process driven by SplitMix64
(increment 0x9E3779B97F4A7C15, multipliers 0xBF58476D1CE4E5B9 and
0x94D049BB133111EB, shifts 30/27/31), so seeds reproduce across platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
from scipy.optimize import brentq

from .aplof import FlowField
from .errors import EmptyScene, SceneParseError
from .events import EventStream, SensorGeometry, TimeWindow

US = 1_000_000
_MASK64 = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed):
        self.state = seed & _MASK64

    def next_u64(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self):
        """Float in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))


# --- motion models -----------------------------------------------------------
# displacement(t) and velocity(t) take seconds since the window start and
# return (dx, dy); displacement(0) == (0, 0).


@dataclass(frozen=True)
class ConstantVelocity:
    vx: float
    vy: float

    def displacement(self, t):
        t = np.asarray(t, dtype=np.float64)
        return self.vx * t, self.vy * t

    def velocity(self, t):
        t = np.asarray(t, dtype=np.float64)
        return np.full_like(t, self.vx), np.full_like(t, self.vy)


@dataclass(frozen=True)
class Circular:
    """Translation along a circle of ``radius`` px, starting at angle ``phase``."""

    radius: float
    angular_rate: float
    phase: float = 0.0

    def displacement(self, t):
        a = self.phase + self.angular_rate * np.asarray(t, dtype=np.float64)
        return (
            self.radius * (np.cos(a) - math.cos(self.phase)),
            self.radius * (np.sin(a) - math.sin(self.phase)),
        )

    def velocity(self, t):
        a = self.phase + self.angular_rate * np.asarray(t, dtype=np.float64)
        rw = self.radius * self.angular_rate
        return -rw * np.sin(a), rw * np.cos(a)


def _taylor(coeffs, t, derivative=0):
    # sum_k c_k t^k / k!, constant term dropped so displacement(0) = 0
    t = np.asarray(t, dtype=np.float64)
    out = np.zeros_like(t)
    for k, c in enumerate(coeffs):
        if k == 0 or k < derivative or c == 0:
            continue
        p = k - derivative
        out = out + c * t**p / math.factorial(p)
    return out


@dataclass(frozen=True)
class Polynomial:
    """Per-axis coefficients ``c_k`` in px/s^k; displacement is sum c_k t^k / k!."""

    coeffs_x: Tuple[float, ...]
    coeffs_y: Tuple[float, ...] = (0.0,)

    def displacement(self, t):
        return _taylor(self.coeffs_x, t), _taylor(self.coeffs_y, t)

    def velocity(self, t):
        return _taylor(self.coeffs_x, t, 1), _taylor(self.coeffs_y, t, 1)

    def acceleration(self, t):
        return _taylor(self.coeffs_x, t, 2), _taylor(self.coeffs_y, t, 2)


MotionModel = Union[ConstantVelocity, Circular, Polynomial]


# --- shapes -------------------------------------------------------------------


@dataclass(frozen=True)
class VerticalEdge:
    """A full-height edge at column ``x0`` on a rigidly moving plane.

    The plane covers the whole sensor, so every pixel carries ground truth.
    Only horizontal motion produces events.
    """

    x0: float


@dataclass(frozen=True)
class PointCloud:
    """Tracked points at absolute ``(x, y)`` positions at the window start."""

    points: Tuple[Tuple[float, float], ...]


@dataclass(frozen=True)
class SceneObject:
    shape: Union[VerticalEdge, PointCloud]
    motion: MotionModel


@dataclass(frozen=True)
class HotPixel:
    x: int
    y: int
    rate: float


@dataclass(frozen=True)
class SyntheticScene:
    geometry: SensorGeometry
    window: TimeWindow
    objects: Tuple[SceneObject, ...] = ()
    hot_pixels: Tuple[HotPixel, ...] = ()

    @property
    def duration_s(self):
        return self.window.duration / US


# --- emission -----------------------------------------------------------------


def _linear_crossings(p0, v, duration):
    """Crossing times and directions of integer lines for p(t) = p0 + v t."""
    if v == 0:
        return np.empty(0), np.empty(0, dtype=np.int64)
    p1 = p0 + v * duration
    if v > 0:
        lines = np.arange(math.ceil(p0), math.floor(p1 + 1e-9) + 1)
    else:
        lines = np.arange(math.floor(p0), math.ceil(p1 - 1e-9) - 1, -1)
    times = (lines - p0) / v
    return times, lines


def _generic_crossings(fn, speed_bound, duration):
    """Crossings of integer lines for a smooth scalar path ``fn`` on [0, duration].

    Steps are small enough that the path moves at most a quarter pixel, so
    each step is assumed monotone; a path that turns back within one step
    can miss a pair of crossings.
    """
    n = max(16, int(math.ceil(speed_bound * duration / 0.25)) + 1)
    ts = np.linspace(0.0, duration, n + 1)
    ps = fn(ts)
    times, lines = [], []
    p_start = float(ps[0])
    if p_start == math.floor(p_start) and ps[1] != ps[0]:
        times.append(0.0)
        lines.append(int(p_start))
    for i in range(n):
        a, b = float(ps[i]), float(ps[i + 1])
        if b > a:
            cs = range(math.floor(a) + 1, math.floor(b) + 1)
        elif b < a:
            cs = range(math.ceil(a) - 1, math.ceil(b) - 1, -1)
        else:
            continue
        for c in cs:
            if fn(ts[i + 1]) == c:
                root = float(ts[i + 1])
            else:
                root = brentq(lambda t: fn(t) - c, ts[i], ts[i + 1], xtol=1e-13, rtol=1e-15)
            times.append(root)
            lines.append(c)
    return np.asarray(times, dtype=np.float64), np.asarray(lines, dtype=np.int64)


def _axis_crossings(motion, base, axis, duration):
    """Times, integer lines and direction signs where one coordinate crosses a pixel line."""
    if isinstance(motion, ConstantVelocity):
        v = motion.vx if axis == 0 else motion.vy
        times, lines = _linear_crossings(base, v, duration)
        return times, lines.astype(np.int64), np.full(len(times), np.sign(v), dtype=np.int64)

    def coord(t):
        return base + motion.displacement(t)[axis]

    grid = np.linspace(0.0, duration, 1025)
    bound = float(np.max(np.abs(motion.velocity(grid)[axis]))) * 1.5 + 1e-9
    if bound <= 1e-9:
        return np.empty(0), np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    times, lines = _generic_crossings(coord, bound, duration)
    vel = motion.velocity(times)[axis]
    return times, lines, np.where(vel >= 0, 1, -1).astype(np.int64)


def _to_us(scene, times):
    return scene.window.t_start + np.floor(times * US + 0.5).astype(np.int64)


def _emit_object(scene, obj):
    """Returns (t_us, x, y) arrays for one object."""
    duration = scene.duration_s
    h = scene.geometry.height
    ts, xs, ys = [], [], []
    if isinstance(obj.shape, VerticalEdge):
        times, lines, sign = _axis_crossings(obj.motion, obj.shape.x0, 0, duration)
        cols = np.where(sign > 0, lines, lines - 1)
        t_us = _to_us(scene, times)
        ts.append(np.repeat(t_us, h))
        xs.append(np.repeat(cols, h))
        ys.append(np.tile(np.arange(h), len(times)))
    else:
        for px, py in obj.shape.points:
            for axis, base in ((0, px), (1, py)):
                times, lines, sign = _axis_crossings(obj.motion, base, axis, duration)
                if len(times) == 0:
                    continue
                dx, dy = obj.motion.displacement(times)
                crossed = np.where(sign > 0, lines, lines - 1)
                if axis == 0:
                    col = crossed
                    row = np.floor(py + dy).astype(np.int64)
                else:
                    row = crossed
                    col = np.floor(px + dx).astype(np.int64)
                ts.append(_to_us(scene, times))
                xs.append(col)
                ys.append(row)
    if not ts:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty, empty
    return np.concatenate(ts), np.concatenate(xs), np.concatenate(ys)


def _emit_hot_pixel(scene, hp, rng):
    duration = scene.duration_s
    times, pols = [], []
    if hp.rate > 0:
        t = 0.0
        while True:
            t += -math.log(1.0 - rng.uniform()) / hp.rate
            if t > duration:
                break
            times.append(t)
            pols.append(1 if rng.next_u64() >> 63 else -1)
    t_us = _to_us(scene, np.asarray(times, dtype=np.float64))
    n = len(times)
    return t_us, np.full(n, hp.x), np.full(n, hp.y), np.asarray(pols, dtype=np.int64)


def emit_events(scene: SyntheticScene, seed: int = 0) -> EventStream:
    """Events for every object and hot pixel, sorted by (t, source, y, x).

    Events landing outside the sensor or outside the window are dropped.
    """
    g = scene.geometry
    cols = {"t": [], "x": [], "y": [], "p": [], "src": []}
    for i, obj in enumerate(scene.objects):
        t, x, y = _emit_object(scene, obj)
        cols["t"].append(t)
        cols["x"].append(x)
        cols["y"].append(y)
        cols["p"].append(np.ones(len(t), dtype=np.int64))
        cols["src"].append(np.full(len(t), i))
    root = SplitMix64(seed)
    for j, hp in enumerate(scene.hot_pixels):
        t, x, y, p = _emit_hot_pixel(scene, hp, SplitMix64(root.next_u64()))
        for k, a in zip("txyp", (t, x, y, p)):
            cols[k].append(a)
        cols["src"].append(np.full(len(t), len(scene.objects) + j))

    if not cols["t"]:
        raise EmptyScene("scene has no objects or hot pixels")
    t, x, y, p, src = (np.concatenate(cols[k]).astype(np.int64) for k in ("t", "x", "y", "p", "src"))
    keep = (
        (x >= 0) & (x < g.width) & (y >= 0) & (y < g.height)
        & (t >= scene.window.t_start) & (t <= scene.window.t_end)
    )
    t, x, y, p, src = t[keep], x[keep], y[keep], p[keep], src[keep]
    if len(t) == 0:
        raise EmptyScene("scene emits no events inside the sensor and window")
    order = np.lexsort((x, y, src, t))
    return EventStream(g, t[order], x[order], y[order], p[order])


# --- ground truth -------------------------------------------------------------


class GroundTruth:
    """Closed-form flows for a scene. Times ``tau`` are seconds from the window start.

    Each pixel belongs to the first object covering it at the window start;
    uncovered pixels are invalid and carry zero flow.
    """

    def __init__(self, scene: SyntheticScene):
        self.scene = scene
        h, w = scene.geometry.shape
        owner = np.full((h, w), -1, dtype=np.int64)
        for i in reversed(range(len(scene.objects))):
            shape = scene.objects[i].shape
            if isinstance(shape, VerticalEdge):
                owner[:] = i
            else:
                for px, py in shape.points:
                    c, r = math.floor(px), math.floor(py)
                    if 0 <= c < w and 0 <= r < h:
                        owner[r, c] = i
        self.owner = owner

    def _field(self, fn):
        h, w = self.owner.shape
        flow = np.zeros((h, w, 2))
        for i, obj in enumerate(self.scene.objects):
            sel = self.owner == i
            if sel.any():
                dx, dy = fn(obj.motion)
                flow[sel] = (float(dx), float(dy))
        return FlowField(flow, self.owner >= 0)

    def flow_at(self, tau) -> FlowField:
        """Cumulative displacement from the window start to ``tau``."""
        return self._field(lambda m: m.displacement(tau))

    def velocity_at(self, tau) -> FlowField:
        """Instantaneous velocity in px/s."""
        return self._field(lambda m: m.velocity(tau))

    def trajectory(self, x, y, tau):
        """Exact displacement of the start pixel ``(x, y)``; None when uncovered."""
        i = self.owner[y, x]
        if i < 0:
            return None
        dx, dy = self.scene.objects[i].motion.displacement(tau)
        return float(dx), float(dy)

    def trajectory_ground_truth(self, n_k=10):
        """Flows at normalized times k/n_k (k = 1..n_k) over the scene window."""
        from .trajectory import TrajectoryGroundTruth

        times = np.arange(1, n_k + 1) / n_k
        flows = [self.flow_at(T * self.scene.duration_s) for T in times]
        return TrajectoryGroundTruth(times, flows)


def ground_truth(scene: SyntheticScene) -> GroundTruth:
    return GroundTruth(scene)


# --- scene files ---------------------------------------------------------------
#
#   # comment
#   width = 16
#   height = 16
#   t_start = 0            (µs)
#   t_end = 100000         (µs)
#   object.0.shape = vertical_edge | point_cloud
#   object.0.x0 = 2.5                        (vertical_edge)
#   object.0.points = 3.5 4.5; 8 2           (point_cloud, "x y" pairs)
#   object.0.motion = constant_velocity | circular | polynomial
#   object.0.vx = 100 / object.0.vy = 0      (constant_velocity)
#   object.0.radius, .angular_rate, .phase   (circular)
#   object.0.coeffs_x = 0, 100, 200 / .coeffs_y   (polynomial)
#   hot_pixel.0 = 3, 4, 1000                 (x, y, rate in events/s)


def _floats(text, lineno):
    try:
        return tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError:
        raise SceneParseError(lineno, f"expected numbers, got {text!r}") from None


def parse_scene(text: str) -> SyntheticScene:
    header = {}
    objects = {}
    hot = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SceneParseError(lineno, f"expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        parts = key.split(".")
        if key in ("width", "height", "t_start", "t_end"):
            try:
                header[key] = int(value)
            except ValueError:
                raise SceneParseError(lineno, f"{key} must be an integer") from None
        elif parts[0] == "object" and len(parts) == 3 and parts[1].isdigit():
            objects.setdefault(int(parts[1]), {})[parts[2]] = (value, lineno)
        elif parts[0] == "hot_pixel" and len(parts) == 2 and parts[1].isdigit():
            vals = _floats(value, lineno)
            if len(vals) != 3:
                raise SceneParseError(lineno, "hot_pixel needs x, y, rate")
            hot[int(parts[1])] = HotPixel(int(vals[0]), int(vals[1]), vals[2])
        else:
            raise SceneParseError(lineno, f"unknown key {key!r}")

    for k in ("width", "height", "t_start", "t_end"):
        if k not in header:
            raise SceneParseError(0, f"missing {k}")
    try:
        geometry = SensorGeometry(header["width"], header["height"])
        window = TimeWindow(header["t_start"], header["t_end"])
    except ValueError as exc:
        raise SceneParseError(0, str(exc)) from None

    objs = [_build_object(i, objects[i]) for i in sorted(objects)]
    return SyntheticScene(geometry, window, tuple(objs), tuple(hot[i] for i in sorted(hot)))


def _build_object(index, props):
    def get(name, default=None):
        if name in props:
            return props[name]
        if default is not None:
            return default
        raise SceneParseError(0, f"object.{index}.{name} is required")

    shape_kind, ln = get("shape")
    if shape_kind == "vertical_edge":
        shape = VerticalEdge(_floats(get("x0")[0], get("x0")[1])[0])
    elif shape_kind == "point_cloud":
        text, ln_pts = get("points")
        pts = []
        for chunk in text.split(";"):
            vals = _floats(chunk, ln_pts)
            if len(vals) != 2:
                raise SceneParseError(ln_pts, f"point needs 'x y', got {chunk.strip()!r}")
            pts.append(vals)
        shape = PointCloud(tuple(pts))
    else:
        raise SceneParseError(ln, f"unknown shape {shape_kind!r}")

    def num(name, default=None):
        text, lineno = get(name, None if default is None else (str(default), 0))
        vals = _floats(text, lineno)
        if len(vals) != 1:
            raise SceneParseError(lineno, f"object.{index}.{name} needs one number")
        return vals[0]

    kind, ln = get("motion")
    if kind == "constant_velocity":
        motion = ConstantVelocity(num("vx", 0.0), num("vy", 0.0))
    elif kind == "circular":
        motion = Circular(num("radius"), num("angular_rate"), num("phase", 0.0))
    elif kind == "polynomial":
        cx = _floats(*get("coeffs_x", ("0", 0)))
        cy = _floats(*get("coeffs_y", ("0", 0)))
        motion = Polynomial(cx, cy)
    else:
        raise SceneParseError(ln, f"unknown motion {kind!r}")
    return SceneObject(shape, motion)
