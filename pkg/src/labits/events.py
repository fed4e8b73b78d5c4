"""Events, streams, sensor geometry and time windows.

Timestamps are integer microseconds throughout; nothing in the event path is
stored as float. Streams are immutable once built and always sorted by time.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagic,
    BadPolarity,
    DegenerateStream,
    DegenerateWindow,
    MalformedLine,
    OutOfBounds,
    TruncatedRecord,
    UnsortedStream,
)

EVENT_MAGIC = b"EVS1"
_HEADER = struct.Struct("<4sHHQ")
RECORD_DTYPE = np.dtype(
    [("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1"), ("pad", "u1")]
)


@dataclass(frozen=True)
class SensorGeometry:
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"sensor must be at least 1x1, got {self.width}x{self.height}")

    @property
    def shape(self):
        return (self.height, self.width)


@dataclass(frozen=True)
class TimeWindow:
    t_start: int
    t_end: int

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise DegenerateWindow(
                f"window end {self.t_end} must be after start {self.t_start}"
            )

    @property
    def duration(self):
        return self.t_end - self.t_start


def _readonly(a, dtype):
    a = np.array(a, dtype=dtype, copy=True).reshape(-1)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class EventStream:
    """A time-sorted sequence of events on a fixed sensor.

    Stored column-wise: ``t`` (int64 µs), ``x``/``y`` (int64 pixel indices)
    and ``p`` (int8, -1 or +1). Equal timestamps keep their storage order.
    """

    geometry: SensorGeometry
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    _validated: bool = field(default=False, repr=False)

    def __post_init__(self):
        t = _readonly(self.t, np.int64)
        x = _readonly(self.x, np.int64)
        y = _readonly(self.y, np.int64)
        p = _readonly(self.p, np.int8)
        if not (len(t) == len(x) == len(y) == len(p)):
            raise ValueError("event columns have different lengths")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "p", p)
        if not self._validated:
            _validate(self)

    @classmethod
    def empty(cls, geometry):
        return cls(geometry, [], [], [], [])

    def __len__(self):
        return len(self.t)

    def __eq__(self, other):
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.geometry == other.geometry
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.p, other.p)
        )

    __hash__ = None

    def take(self, index):
        """Sub-stream from an index array or slice; order is preserved."""
        return EventStream(
            self.geometry,
            self.t[index],
            self.x[index],
            self.y[index],
            self.p[index],
            _validated=True,
        )

    @property
    def linear_index(self):
        return self.y * self.geometry.width + self.x


def _validate(stream):
    g = stream.geometry
    bad = (stream.x < 0) | (stream.x >= g.width) | (stream.y < 0) | (stream.y >= g.height)
    if bad.any():
        raise OutOfBounds(int(np.argmax(bad)))
    badp = (stream.p != 1) & (stream.p != -1)
    if badp.any():
        raise BadPolarity(int(np.argmax(badp)))
    if (stream.t < 0).any():
        raise ValueError("timestamps must be non-negative")
    if len(stream.t) > 1:
        dec = np.diff(stream.t) < 0
        if dec.any():
            raise UnsortedStream(int(np.argmax(dec)) + 1)


def sort_events(stream_or_columns, geometry=None):
    """Stable sort by timestamp.

    Accepts an :class:`EventStream` or a ``(t, x, y, p)`` tuple plus geometry,
    so unsorted data can be fixed before it ever becomes a stream.
    """
    if isinstance(stream_or_columns, EventStream):
        s = stream_or_columns
        t, x, y, p, geometry = s.t, s.x, s.y, s.p, s.geometry
    else:
        t, x, y, p = (np.asarray(c) for c in stream_or_columns)
    order = np.argsort(t, kind="stable")
    return EventStream(geometry, t[order], x[order], y[order], p[order])


def parse_csv(text, geometry):
    """Parse ``t,x,y,p`` lines. ``#`` lines and blank lines are skipped.

    Polarity 0 is read as -1. Errors carry 1-based line numbers for malformed
    lines and 0-based event indices for bounds/order problems.
    """
    if not isinstance(text, str):
        text = text.read()
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        parts = s.split(",")
        if len(parts) != 4:
            raise MalformedLine(lineno, line)
        try:
            t, x, y, p = (int(v.strip()) for v in parts)
        except ValueError:
            raise MalformedLine(lineno, line) from None
        if p == 0:
            p = -1
        if p not in (-1, 1) or t < 0:
            raise MalformedLine(lineno, line)
        rows.append((t, x, y, p))
    cols = np.array(rows, dtype=np.int64).reshape(-1, 4)
    return EventStream(geometry, cols[:, 0], cols[:, 1], cols[:, 2], cols[:, 3])


def format_csv(stream):
    lines = [
        f"{t},{x},{y},{p}"
        for t, x, y, p in zip(
            stream.t.tolist(), stream.x.tolist(), stream.y.tolist(), stream.p.tolist()
        )
    ]
    return "\n".join(lines) + ("\n" if lines else "")


def write_binary(stream):
    g = stream.geometry
    if g.width > 0xFFFF or g.height > 0xFFFF:
        raise ValueError("geometry does not fit the u16 header fields")
    rec = np.zeros(len(stream), dtype=RECORD_DTYPE)
    rec["t"] = stream.t
    rec["x"] = stream.x
    rec["y"] = stream.y
    rec["p"] = stream.p
    return _HEADER.pack(EVENT_MAGIC, g.width, g.height, len(stream)) + rec.tobytes()


def read_binary(data):
    data = bytes(data)
    if len(data) < _HEADER.size:
        raise TruncatedRecord(f"{len(data)} bytes is shorter than the header")
    magic, w, h, n = _HEADER.unpack_from(data)
    if magic != EVENT_MAGIC:
        raise BadMagic(f"expected {EVENT_MAGIC!r}, found {magic!r}")
    payload = memoryview(data)[_HEADER.size:]
    expected = n * RECORD_DTYPE.itemsize
    if len(payload) != expected:
        raise TruncatedRecord(
            f"header announces {n} records ({expected} bytes), payload has {len(payload)}"
        )
    rec = np.frombuffer(payload, dtype=RECORD_DTYPE)
    if (rec["pad"] != 0).any():
        raise TruncatedRecord(f"non-zero pad byte in record {int(np.argmax(rec['pad'] != 0))}")
    if (rec["t"] > np.iinfo(np.int64).max).any():
        raise ValueError("timestamp exceeds int64 range")
    return EventStream(SensorGeometry(w, h), rec["t"], rec["x"], rec["y"], rec["p"])


def slice_events(stream, window, closed_end=True):
    """Events with ``t_start <= t <= t_end`` (or ``< t_end`` when half-open)."""
    lo = np.searchsorted(stream.t, window.t_start, side="left")
    hi = np.searchsorted(stream.t, window.t_end, side="right" if closed_end else "left")
    return stream.take(slice(lo, hi))


def natural_window(stream):
    if len(stream) < 2:
        raise DegenerateStream(f"need at least two events, stream has {len(stream)}")
    t0, t1 = int(stream.t[0]), int(stream.t[-1])
    if t1 <= t0:
        raise DegenerateStream("all events share one timestamp")
    return TimeWindow(t0, t1)


def resolve_window(stream, window):
    """Explicit window, or the stream's natural window when ``window`` is None."""
    return natural_window(stream) if window is None else window
