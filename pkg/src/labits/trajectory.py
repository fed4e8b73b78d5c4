"""Bezier displacement curves, trajectory supervision loss and evaluation metrics."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from math import comb
from typing import List, Sequence

import numpy as np

from .aplof import FlowField
from .errors import (
    BadMagic,
    DimMismatch,
    EmptyIterates,
    NoValidPixels,
    TauOutOfRange,
    TruncatedRecord,
    Underdetermined,
)

BEZIER_MAGIC = b"BZF1"
DEFAULT_DEGREE = 10
DEFAULT_DISCOUNT = 0.8


@dataclass(eq=False)
class BezierTrajectoryField:
    """Per-pixel Bezier curves with the first control point pinned at the origin.

    ``control_points`` has shape ``(n, H, W, 2)`` and holds P_1..P_n in pixels.
    ``t_ref``/``t_target`` (µs) map to normalized times 0 and 1.
    """

    control_points: np.ndarray
    t_ref: int = 0
    t_target: int = 1

    def __post_init__(self):
        self.control_points = np.asarray(self.control_points, dtype=np.float64)
        cp = self.control_points
        if cp.ndim != 4 or cp.shape[-1] != 2 or cp.shape[0] < 1:
            raise DimMismatch(f"control points must be (n, H, W, 2), got {cp.shape}")

    @property
    def degree(self):
        return self.control_points.shape[0]

    @property
    def shape(self):
        return self.control_points.shape[1:3]

    def normalized_time(self, t):
        return (t - self.t_ref) / (self.t_target - self.t_ref)


@dataclass(eq=False)
class TrajectoryGroundTruth:
    times: np.ndarray
    flows: List[FlowField]

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64).reshape(-1)
        if len(self.times) < 1:
            raise ValueError("need at least one evaluation time")
        if len(self.times) != len(self.flows):
            raise DimMismatch(f"{len(self.times)} times but {len(self.flows)} flows")
        if (np.diff(self.times) <= 0).any():
            raise ValueError("evaluation times must be strictly increasing")
        if self.times[0] < 0 or self.times[-1] > 1:
            raise TauOutOfRange("evaluation times must lie in [0, 1]")
        shapes = {f.shape for f in self.flows}
        if len(shapes) != 1:
            raise DimMismatch("ground-truth flows differ in dims")

    @property
    def shape(self):
        return self.flows[0].shape


def bezier_eval(field: BezierTrajectoryField, tau: float) -> FlowField:
    """Displacement at normalized time ``tau`` by de Casteljau recursion."""
    if not 0.0 <= tau <= 1.0:
        raise TauOutOfRange(f"tau must lie in [0, 1], got {tau}")
    cp = field.control_points
    pts = np.concatenate([np.zeros((1,) + cp.shape[1:]), cp])
    s = 1.0 - tau
    for r in range(field.degree, 0, -1):
        pts = s * pts[:r] + tau * pts[1 : r + 1]
    h, w = field.shape
    return FlowField(pts[0], np.ones((h, w), dtype=bool))


def bernstein_matrix(times, degree):
    """Rows: times; columns: Bernstein weights of P_1..P_n."""
    t = np.asarray(times, dtype=np.float64)[:, None]
    i = np.arange(1, degree + 1)[None, :]
    binom = np.array([comb(degree, k) for k in range(1, degree + 1)], dtype=np.float64)
    return binom * (1.0 - t) ** (degree - i) * t**i


def _check_dims(a, b):
    if a.shape != b.shape:
        raise DimMismatch(f"{a.shape} vs {b.shape}")


def _mean_l1(pred: FlowField, gt: FlowField):
    _check_dims(pred, gt)
    both = pred.valid & gt.valid
    if not both.any():
        raise NoValidPixels("no jointly valid pixels")
    return float(np.abs(pred.flow[both] - gt.flow[both]).sum(axis=1).mean())


def trajectory_loss(
    iterates: Sequence[BezierTrajectoryField],
    gt: TrajectoryGroundTruth,
    gamma: float = DEFAULT_DISCOUNT,
) -> float:
    """Discounted L1 between each refinement iterate and the ground-truth flows.

    Iterate i of N_i is weighted by gamma**(N_i - i); the per-flow error is the
    pixel mean of |du| + |dv|; the total is divided by the number of flows.
    """
    if not iterates:
        raise EmptyIterates("no iterates to supervise")
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    n_i = len(iterates)
    total = 0.0
    for i, it in enumerate(iterates, start=1):
        if it.shape != gt.shape:
            raise DimMismatch(f"iterate {i} has dims {it.shape}, ground truth {gt.shape}")
        err = sum(_mean_l1(bezier_eval(it, T), f) for T, f in zip(gt.times, gt.flows))
        total += gamma ** (n_i - i) * err
    return total / len(gt.times)


def two_view_metrics(pred_endpoint: FlowField, gt_endpoint: FlowField):
    """(EPE, AE in degrees) over jointly valid pixels.

    AE is the space-time angle between (u, v, 1) vectors.
    """
    _check_dims(pred_endpoint, gt_endpoint)
    both = pred_endpoint.valid & gt_endpoint.valid
    if not both.any():
        raise NoValidPixels("no jointly valid pixels")
    p = pred_endpoint.flow[both]
    g = gt_endpoint.flow[both]
    epe = np.sqrt(((p - g) ** 2).sum(axis=1)).mean()
    a = np.concatenate([p, np.ones((len(p), 1))], axis=1)
    b = np.concatenate([g, np.ones((len(g), 1))], axis=1)
    # same angle as arccos(a.b / |a||b|) but well conditioned near zero
    cross = np.linalg.norm(np.cross(a, b), axis=1)
    ae = np.degrees(np.arctan2(cross, (a * b).sum(axis=1))).mean()
    return float(epe), float(ae)


def trajectory_metrics(pred: BezierTrajectoryField, gt: TrajectoryGroundTruth):
    """(TEPE, TAE): EPE and AE averaged uniformly over the evaluation times."""
    if pred.shape != gt.shape:
        raise DimMismatch(f"prediction {pred.shape} vs ground truth {gt.shape}")
    per_k = [two_view_metrics(bezier_eval(pred, T), f) for T, f in zip(gt.times, gt.flows)]
    tepe = float(np.mean([m[0] for m in per_k]))
    tae = float(np.mean([m[1] for m in per_k]))
    return tepe, tae


def fit_bezier(
    gt: TrajectoryGroundTruth, degree: int = DEFAULT_DEGREE, t_ref: int = 0, t_target: int = 1
) -> BezierTrajectoryField:
    """Per-pixel least-squares Bezier fit with P_0 fixed at zero.

    Pixels not valid in every ground-truth flow get zero control points.
    """
    n_k = len(gt.times)
    if n_k < degree:
        raise Underdetermined(f"{n_k} flows cannot determine {degree} control points")
    h, w = gt.shape
    valid = np.logical_and.reduce([f.valid for f in gt.flows])
    rhs = np.stack([f.flow[valid] for f in gt.flows])  # (N_k, n_valid, 2)
    a = bernstein_matrix(gt.times, degree)
    sol, *_ = np.linalg.lstsq(a, rhs.reshape(n_k, -1), rcond=None)
    cp = np.zeros((degree, h, w, 2))
    cp[:, valid] = sol.reshape(degree, -1, 2)
    return BezierTrajectoryField(cp, t_ref, t_target)


def write_bezier(field: BezierTrajectoryField) -> bytes:
    h, w = field.shape
    head = BEZIER_MAGIC + struct.pack("<IIIQQ", h, w, field.degree, field.t_ref, field.t_target)
    body = np.ascontiguousarray(field.control_points.transpose(1, 2, 0, 3), dtype="<f4")
    return head + body.tobytes()


def read_bezier(data) -> BezierTrajectoryField:
    data = bytes(data)
    if data[:4] != BEZIER_MAGIC:
        raise BadMagic(f"expected {BEZIER_MAGIC!r}, found {data[:4]!r}")
    hdr = struct.Struct("<IIIQQ")
    if len(data) < 4 + hdr.size:
        raise TruncatedRecord("Bezier header is incomplete")
    h, w, n, t_r, t_t = hdr.unpack_from(data, 4)
    off = 4 + hdr.size
    if len(data) != off + h * w * n * 8:
        raise TruncatedRecord(f"expected {h * w * n} control points")
    body = np.frombuffer(data, dtype="<f4", offset=off).reshape(h, w, n, 2)
    return BezierTrajectoryField(body.transpose(2, 0, 1, 3).astype(np.float64), t_r, t_t)
