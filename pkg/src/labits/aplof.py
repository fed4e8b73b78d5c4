"""Active-pixel masks and active pixel local optical flow (APLOF).

Ground-truth APLOF is the displacement accumulated over a short interval
around a probe time, scattered to where each start pixel sits at that probe.
The analytic estimator reads speed directly off one Labits layer: a layer is a
map of relative event times, so its spatial gradient is inverse speed.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import BadConfig, BadMagic, BadThreshold, DimMismatch, NoValidPixels, TruncatedRecord

FLOW_MAGIC = b"FLW1"
_FLOW_RECORD = np.dtype([("u", "<f4"), ("v", "<f4"), ("valid", "u1"), ("pad", "V3")])

LR_FACTOR = 8


@dataclass(eq=False)
class FlowField:
    """Per-pixel 2-vectors ``flow[y, x] = (u, v)`` with a validity mask.

    Invalid pixels carry zeros and are ignored by every norm or mean.
    """

    flow: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.flow = np.asarray(self.flow, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.flow.ndim != 3 or self.flow.shape[2] != 2:
            raise DimMismatch(f"flow must be (H, W, 2), got {self.flow.shape}")
        if self.valid.shape != self.flow.shape[:2]:
            raise DimMismatch("validity mask does not match flow dims")

    @classmethod
    def uniform(cls, h, w, u, v, valid=True):
        flow = np.empty((h, w, 2))
        flow[..., 0] = u
        flow[..., 1] = v
        return cls(flow, np.full((h, w), valid))

    @property
    def shape(self):
        return self.valid.shape

    @property
    def u(self):
        return self.flow[..., 0]

    @property
    def v(self):
        return self.flow[..., 1]

    def __eq__(self, other):
        if not isinstance(other, FlowField):
            return NotImplemented
        return np.array_equal(self.valid, other.valid) and np.array_equal(self.flow, other.flow)

    __hash__ = None


def write_flow(field: FlowField) -> bytes:
    h, w = field.shape
    rec = np.zeros(h * w, dtype=_FLOW_RECORD)
    rec["u"] = field.u.ravel()
    rec["v"] = field.v.ravel()
    rec["valid"] = field.valid.ravel()
    return FLOW_MAGIC + struct.pack("<II", h, w) + rec.tobytes()


def read_flow(data) -> FlowField:
    data = bytes(data)
    if data[:4] != FLOW_MAGIC:
        raise BadMagic(f"expected {FLOW_MAGIC!r}, found {data[:4]!r}")
    if len(data) < 12:
        raise TruncatedRecord("flow header is incomplete")
    h, w = struct.unpack_from("<II", data, 4)
    if len(data) != 12 + h * w * _FLOW_RECORD.itemsize:
        raise TruncatedRecord(f"expected {h * w} flow records")
    rec = np.frombuffer(data, dtype=_FLOW_RECORD, offset=12)
    flow = np.stack([rec["u"], rec["v"]], axis=-1).astype(np.float64).reshape(h, w, 2)
    return FlowField(flow, rec["valid"].reshape(h, w) != 0)


@dataclass(eq=False)
class ActivePixelMask:
    mask: np.ndarray
    resolution: str = "high"

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.resolution not in ("high", "low"):
            raise ValueError(f"resolution must be 'high' or 'low', got {self.resolution!r}")

    @property
    def shape(self):
        return self.mask.shape


@dataclass
class AplofPair:
    hr: FlowField
    lr: FlowField


def _as_layer(layer):
    layer = np.asarray(layer)
    if layer.ndim == 3:
        if layer.shape[0] != 1:
            raise DimMismatch(f"expected a single layer, got {layer.shape[0]} channels")
        layer = layer[0]
    if layer.ndim != 2:
        raise DimMismatch(f"expected an (H, W) layer, got shape {layer.shape}")
    return layer


def apm_high(labits_layer, beta=0.3) -> ActivePixelMask:
    """Pixels whose Labits magnitude is below ``beta``; the -1 fill is never active."""
    if not 0.0 < beta <= 1.0:
        raise BadThreshold(f"beta must lie in (0, 1], got {beta}")
    return ActivePixelMask(np.abs(_as_layer(labits_layer)) < beta, "high")


def lr_shape(h, w):
    return (-(-h // LR_FACTOR), -(-w // LR_FACTOR))


def _block_sum(a):
    """Sum over non-overlapping 8x8 blocks, zero-padding ragged edges."""
    h, w = a.shape[:2]
    hl, wl = lr_shape(h, w)
    pad = [(0, hl * LR_FACTOR - h), (0, wl * LR_FACTOR - w)] + [(0, 0)] * (a.ndim - 2)
    a = np.pad(a, pad)
    a = a.reshape(hl, LR_FACTOR, wl, LR_FACTOR, *a.shape[2:])
    return a.sum(axis=(1, 3))


def apm_low(hr_mask: ActivePixelMask, gamma=0.125) -> ActivePixelMask:
    """Low-resolution mask: 8x8 blocks whose active fraction is at least ``gamma``.

    Edge blocks are averaged over their in-bounds pixels only.
    """
    if not 0.0 < gamma < 1.0:
        raise BadThreshold(f"gamma must lie in (0, 1), got {gamma}")
    m = hr_mask.mask
    active = _block_sum(m.astype(np.int64))
    inside = _block_sum(np.ones(m.shape, dtype=np.int64))
    # exact integer comparison: active / inside >= gamma
    return ActivePixelMask(active >= gamma * inside, "low")


def aplof_ground_truth(flow_minus, flow_plus, flow_tau, hr_mask) -> FlowField:
    """Displacement between the two bracketing flows, moved to each pixel's position at tau.

    Source pixels must be active and valid in all three flows. Targets are
    rounded half-up to the nearest pixel; targets outside the frame are
    dropped and collisions are averaged.
    """
    shape = flow_tau.shape
    if flow_minus.shape != shape or flow_plus.shape != shape or hr_mask.shape != shape:
        raise DimMismatch("flows and mask must share dims")
    h, w = shape
    src = hr_mask.mask & flow_minus.valid & flow_plus.valid & flow_tau.valid
    ys, xs = np.nonzero(src)
    value = flow_plus.flow[ys, xs] - flow_minus.flow[ys, xs]
    tx = np.floor(xs + flow_tau.u[ys, xs] + 0.5).astype(np.int64)
    ty = np.floor(ys + flow_tau.v[ys, xs] + 0.5).astype(np.int64)
    inside = (tx >= 0) & (tx < w) & (ty >= 0) & (ty < h)
    target = ty[inside] * w + tx[inside]
    value = value[inside]

    count = np.bincount(target, minlength=h * w)
    su = np.bincount(target, weights=value[:, 0], minlength=h * w)
    sv = np.bincount(target, weights=value[:, 1], minlength=h * w)
    valid = count > 0
    out = np.zeros((h * w, 2))
    out[valid, 0] = su[valid] / count[valid]
    out[valid, 1] = sv[valid] / count[valid]
    return FlowField(out.reshape(h, w, 2), valid.reshape(h, w))


def aplof_low_resolution(hr: FlowField, lr_mask: ActivePixelMask) -> FlowField:
    """Block-average an HR APLOF onto the 1/8 grid, kept in HR pixel units."""
    if lr_mask.shape != lr_shape(*hr.shape):
        raise DimMismatch("LR mask does not match the HR field")
    n = _block_sum(hr.valid.astype(np.int64))
    s = _block_sum(np.where(hr.valid[..., None], hr.flow, 0.0))
    valid = lr_mask.mask & (n > 0)
    flow = np.zeros(s.shape)
    flow[valid] = s[valid] / n[valid][:, None]
    return FlowField(flow, valid)


def _plane_fit_rows(z, active, rows, half, tau_range, min_support, min_grad):
    """Fit L = a*dx + b*dy + c over active pixels of each patch centred in ``rows``."""
    h, w = z.shape
    r0, r1 = rows
    zp = np.pad(z, half)
    ap = np.pad(active, half)
    shape = (r1 - r0, w)
    s1 = np.zeros(shape)
    sx = np.zeros(shape)
    sy = np.zeros(shape)
    sxx = np.zeros(shape)
    sxy = np.zeros(shape)
    syy = np.zeros(shape)
    sz = np.zeros(shape)
    sxz = np.zeros(shape)
    syz = np.zeros(shape)
    for dy in range(-half, half + 1):
        for dx in range(-half, half + 1):
            ys = slice(r0 + half + dy, r1 + half + dy)
            xs = slice(half + dx, half + dx + w)
            m = ap[ys, xs].astype(np.float64)
            mz = m * zp[ys, xs]
            s1 += m
            sx += m * dx
            sy += m * dy
            sxx += m * (dx * dx)
            sxy += m * (dx * dy)
            syy += m * (dy * dy)
            sz += mz
            sxz += mz * dx
            syz += mz * dy

    # Cramer's rule on the 3x3 normal equations
    det = (
        sxx * (syy * s1 - sy * sy)
        - sxy * (sxy * s1 - sy * sx)
        + sx * (sxy * sy - syy * sx)
    )
    safe = np.where(det == 0.0, 1.0, det)
    a = (
        sxz * (syy * s1 - sy * sy)
        - sxy * (syz * s1 - sy * sz)
        + sx * (syz * sy - syy * sz)
    ) / safe
    b = (
        sxx * (syz * s1 - sz * sy)
        - sxz * (sxy * s1 - sy * sx)
        + sx * (sxy * sz - syz * sx)
    ) / safe
    g2 = a * a + b * b
    valid = (
        active[r0:r1]
        & (s1 >= min_support)
        & (np.abs(det) > 1e-9)
        & (g2 >= min_grad * min_grad)
    )
    g2 = np.where(valid, g2, 1.0)
    flow = np.stack([a / (g2 * tau_range), b / (g2 * tau_range)], axis=-1)
    flow[~valid] = 0.0
    return flow, valid


def aplof_from_labits(
    labits_layer,
    tau_range,
    beta=0.3,
    patch=5,
    min_support=6,
    workers=1,
) -> FlowField:
    """Normal-flow velocity (px/s) at active pixels of one Labits layer.

    :param labits_layer: (H, W) or (1, H, W) layer of normalized times
    :param tau_range: probe spacing in seconds
    :param patch: odd patch width for the local plane fit
    :param min_support: minimum number of active pixels in the patch
    :return: FlowField; motion points towards increasing time
    """
    if patch < 3 or patch % 2 == 0:
        raise BadConfig(f"patch must be an odd integer >= 3, got {patch}")
    if min_support < 3:
        raise BadConfig(f"min_support must be at least 3, got {min_support}")
    if not tau_range > 0:
        raise BadConfig(f"tau_range must be positive, got {tau_range}")
    z = _as_layer(labits_layer).astype(np.float64)
    active = apm_high(z, beta).mask
    h, w = z.shape
    half = patch // 2

    n_chunks = max(1, min(workers, h))
    bounds = np.linspace(0, h, n_chunks + 1).astype(int)
    jobs = [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]

    def run(rows):
        return _plane_fit_rows(z, active, rows, half, tau_range, min_support, 1e-6)

    if n_chunks == 1:
        parts = [run(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=n_chunks) as pool:
            parts = list(pool.map(run, jobs))
    flow = np.concatenate([p[0] for p in parts])
    valid = np.concatenate([p[1] for p in parts])
    return FlowField(flow, valid)


def backward_difference(f, x, h):
    return (f(x) - f(x - h)) / h


def central_difference(f, x, h):
    return (f(x + h) - f(x - h)) / (2 * h)


def _level_l1(pred, gt):
    if pred.shape != gt.shape:
        raise DimMismatch(f"prediction {pred.shape} vs ground truth {gt.shape}")
    both = pred.valid & gt.valid
    n = int(both.sum())
    if n == 0:
        return 0.0, 0
    err = np.abs(pred.flow[both] - gt.flow[both]).sum(axis=1)
    return float(err.mean()), n


def aplof_loss(pred: AplofPair, gt: AplofPair) -> float:
    """Mean per-pixel L1 (|du| + |dv|) at HR plus the same at LR.

    A level with no jointly valid pixels contributes zero; if neither level
    has any, :class:`NoValidPixels` is raised.
    """
    hr, n_hr = _level_l1(pred.hr, gt.hr)
    lr, n_lr = _level_l1(pred.lr, gt.lr)
    if n_hr == 0 and n_lr == 0:
        raise NoValidPixels("no jointly valid pixels at either resolution")
    return hr + lr
