"""Dense representations built from an :class:`~labits.events.EventStream`.

All builders return ``float32`` arrays shaped ``(C, H, W)`` with channels
outermost. Normalized times are computed in float64 from the integer
timestamps and only rounded to float32 on output, so results are bit-exact
across runs and across the ``workers`` setting.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import BadConfig, BadMagic, TruncatedRecord
from .events import EventStream, TimeWindow, resolve_window, slice_events

TENSOR_MAGIC = b"DTN1"


@dataclass(frozen=True)
class LabitsConfig:
    """
    :param bins: number of probe times B
    :param window: explicit window, or None for first/last event timestamps
    :param future: ``"earliest"`` keeps the nearest future event; ``"latest"``
        reproduces a literal overwrite loop over ascending events
    """

    bins: int
    window: Optional[TimeWindow] = None
    future: str = "earliest"

    def __post_init__(self):
        if self.bins < 1:
            raise BadConfig(f"Labits needs at least one probe time, got {self.bins}")
        if self.future not in ("earliest", "latest"):
            raise BadConfig(f"unknown future-event rule {self.future!r}")


@dataclass(frozen=True)
class VoxelConfig:
    bins: int
    window: Optional[TimeWindow] = None

    def __post_init__(self):
        if self.bins < 2:
            raise BadConfig(f"voxel grid needs at least two bins, got {self.bins}")


@dataclass(frozen=True)
class ToreConfig:
    depth: int
    window: Optional[TimeWindow] = None

    def __post_init__(self):
        if self.depth < 1:
            raise BadConfig(f"TORE depth must be positive, got {self.depth}")


def probe_schedule(window, bins):
    """Return ``(tau_range, probe_times)`` for B probes over ``window``."""
    tau_range = (window.t_end - window.t_start) / (bins + 1)
    probes = [window.t_start + i * tau_range for i in range(1, bins + 1)]
    return tau_range, probes


def _parallel_map(fn, items, workers):
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _winners(scratch, idx, first):
    """Positions in ``idx`` holding the first (or last) occurrence of each pixel.

    ``scratch`` is an all -1 int array over pixels and is restored on return.
    """
    pos = np.arange(len(idx))
    if first:
        scratch[idx] = len(idx)
        np.minimum.at(scratch, idx, pos)
    else:
        np.maximum.at(scratch, idx, pos)
    win = np.flatnonzero(scratch[idx] == pos)
    scratch[idx] = -1
    return win


def _labits_layer(out, scratch, tf, lin, tau, tau_range, future_rule):
    # future: tau < t <= tau + tau_range
    a = np.searchsorted(tf, tau, side="right")
    b = np.searchsorted(tf, tau + tau_range, side="right")
    if b > a:
        sel = a + _winners(scratch, lin[a:b], first=future_rule == "earliest")
        out[lin[sel]] = np.clip((tf[sel] - tau) / tau_range, -1.0, 1.0)

    # past: tau - tau_range <= t <= tau, most recent wins and overrides future
    a = np.searchsorted(tf, tau - tau_range, side="left")
    b = np.searchsorted(tf, tau, side="right")
    if b > a:
        sel = a + _winners(scratch, lin[a:b], first=False)
        out[lin[sel]] = np.clip((tf[sel] - tau) / tau_range, -1.0, 1.0)


def build_labits(stream: EventStream, config: LabitsConfig, workers: int = 1) -> np.ndarray:
    """Layered bidirectional time surfaces, shape ``(B, H, W)``.

    For each probe time the value at a pixel is the normalized offset of its
    most recent event in the preceding ``tau_range``; failing that, of its
    first event in the following ``tau_range``; failing that, -1. Polarity is
    ignored.
    """
    window = resolve_window(stream, config.window)
    tau_range, probes = probe_schedule(window, config.bins)
    h, w = stream.geometry.shape
    tf = stream.t.astype(np.float64)
    lin = stream.linear_index
    out = np.full((config.bins, h * w), -1.0, dtype=np.float32)

    def run(layers):
        scratch = np.full(h * w, -1, dtype=np.int64)
        for i in layers:
            _labits_layer(out[i], scratch, tf, lin, probes[i], tau_range, config.future)

    chunks = [c for c in np.array_split(np.arange(config.bins), max(1, workers)) if len(c)]
    _parallel_map(run, chunks, workers)
    return out.reshape(config.bins, h, w)


def _normalized_times(stream, window):
    return (stream.t.astype(np.float64) - window.t_start) / window.duration


def build_time_surface(stream: EventStream, window: Optional[TimeWindow] = None) -> np.ndarray:
    """Most recent normalized timestamp per polarity; channel 0 negative, 1 positive."""
    window = resolve_window(stream, window)
    s = slice_events(stream, window, closed_end=True)
    h, w = s.geometry.shape
    out = np.full(2 * h * w, -1.0, dtype=np.float32)
    if len(s):
        key = s.linear_index + (s.p > 0) * (h * w)
        sel = _winners(np.full(2 * h * w, -1, dtype=np.int64), key, first=False)
        out[key[sel]] = _normalized_times(s.take(sel), window)
    return out.reshape(2, h, w)


def build_tore(stream: EventStream, config: ToreConfig) -> np.ndarray:
    """The K most recent normalized timestamps per pixel and polarity.

    Channels are polarity-major: ``[neg_0 .. neg_{K-1}, pos_0 .. pos_{K-1}]``
    with layer 0 the most recent. Missing depth is -1.
    """
    window = resolve_window(stream, config.window)
    s = slice_events(stream, window, closed_end=True)
    h, w = s.geometry.shape
    k = config.depth
    out = np.full((2 * k, h * w), -1.0, dtype=np.float32)
    if len(s) == 0:
        return out.reshape(2 * k, h, w)

    tn = _normalized_times(s, window)
    pol = (s.p > 0).astype(np.int64)
    key = s.linear_index * 2 + pol
    order = np.argsort(key, kind="stable")
    skey = key[order]
    # rank counted from the end of each (pixel, polarity) run; runs are time-ordered
    n = len(skey)
    run_end = np.empty(n, dtype=np.int64)
    boundaries = np.flatnonzero(np.diff(skey)) + 1
    ends = np.append(boundaries, n)
    starts = np.insert(boundaries, 0, 0)
    run_end[:] = np.repeat(ends, ends - starts)
    rank = run_end - 1 - np.arange(n)
    keep = rank < k
    sel = order[keep]
    channel = pol[sel] * k + rank[keep]
    out[channel, s.linear_index[sel]] = tn[sel].astype(np.float32)
    return out.reshape(2 * k, h, w)


def build_event_frame(stream: EventStream) -> np.ndarray:
    """Per-pixel sum of polarities, shape ``(1, H, W)``."""
    h, w = stream.geometry.shape
    frame = np.bincount(stream.linear_index, weights=stream.p, minlength=h * w)
    return frame.astype(np.float32).reshape(1, h, w)


def build_event_count(stream: EventStream) -> np.ndarray:
    """Per-pixel event counts; channel 0 negative, channel 1 positive."""
    h, w = stream.geometry.shape
    lin = stream.linear_index
    pos = stream.p > 0
    neg_count = np.bincount(lin[~pos], minlength=h * w)
    pos_count = np.bincount(lin[pos], minlength=h * w)
    return np.stack([neg_count, pos_count]).astype(np.float32).reshape(2, h, w)


def build_voxel_grid(stream: EventStream, config: VoxelConfig, workers: int = 1) -> np.ndarray:
    """Polarity sums spread over B temporal bins with a bilinear kernel.

    Each event contributes ``p * max(0, 1 - |b - t*|)`` to its two neighboring
    bins, ``t* = (t - t_start) / duration * (B - 1)``. Contributions are
    accumulated per cell in event order.
    """
    window = resolve_window(stream, config.window)
    s = slice_events(stream, window, closed_end=True)
    nb = config.bins
    h, w = s.geometry.shape
    npix = h * w

    tstar = _normalized_times(s, window) * (nb - 1)
    b0 = np.floor(tstar).astype(np.int64)
    bins = np.stack([b0, b0 + 1], axis=1)
    weights = np.maximum(0.0, 1.0 - np.abs(bins - tstar[:, None])) * s.p[:, None]
    # interleave (left, right) per event so each cell sees contributions in event order
    bins = bins.ravel()
    weights = weights.ravel()
    cells = np.repeat(s.linear_index, 2)
    ok = (bins >= 0) & (bins < nb) & (weights != 0.0)
    bins, weights, cells = bins[ok], weights[ok], cells[ok]

    if workers <= 1:
        grid = np.bincount(bins * npix + cells, weights=weights, minlength=nb * npix)
        return grid.astype(np.float32).reshape(nb, h, w)

    chunks = np.array_split(np.arange(nb), min(workers, nb))

    def accumulate(chunk):
        lo, hi = chunk[0], chunk[-1] + 1
        m = (bins >= lo) & (bins < hi)
        part = np.bincount(
            (bins[m] - lo) * npix + cells[m], weights=weights[m], minlength=(hi - lo) * npix
        )
        return part.astype(np.float32)

    parts = _parallel_map(accumulate, [c for c in chunks if len(c)], workers)
    return np.concatenate(parts).reshape(nb, h, w)


def write_tensor(tensor) -> bytes:
    a = np.ascontiguousarray(tensor, dtype="<f4")
    head = TENSOR_MAGIC + struct.pack(f"<I{a.ndim}I", a.ndim, *a.shape)
    return head + a.tobytes()


def read_tensor(data) -> np.ndarray:
    data = bytes(data)
    if data[:4] != TENSOR_MAGIC:
        raise BadMagic(f"expected {TENSOR_MAGIC!r}, found {data[:4]!r}")
    if len(data) < 8:
        raise TruncatedRecord("tensor header is incomplete")
    (rank,) = struct.unpack_from("<I", data, 4)
    off = 8 + 4 * rank
    if len(data) < off:
        raise TruncatedRecord("tensor dims are incomplete")
    dims = struct.unpack_from(f"<{rank}I", data, 8)
    count = int(np.prod(dims, dtype=np.int64))
    if len(data) != off + 4 * count:
        raise TruncatedRecord(f"expected {count} float32 values after the header")
    return np.frombuffer(data, dtype="<f4", offset=off).reshape(dims).astype(np.float32)
