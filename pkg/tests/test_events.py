import io
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from labits.errors import (
    BadMagic,
    BadPolarity,
    DegenerateStream,
    DegenerateWindow,
    MalformedLine,
    OutOfBounds,
    TruncatedRecord,
    UnsortedStream,
)
from labits.events import (
    EventStream,
    SensorGeometry,
    TimeWindow,
    format_csv,
    natural_window,
    parse_csv,
    read_binary,
    slice_events,
    sort_events,
    write_binary,
)

from conftest import random_stream, streams

G16 = SensorGeometry(16, 16)


def test_parse_csv_basic():
    s = parse_csv("100,5,5,1\n900,5,5,1", G16)
    assert len(s) == 2
    assert s.t.tolist() == [100, 900]
    assert s.x.tolist() == [5, 5]
    assert s.p.tolist() == [1, 1]


def test_parse_csv_out_of_bounds():
    with pytest.raises(OutOfBounds) as exc:
        parse_csv("100,20,5,1", G16)
    assert exc.value.index == 0


def test_parse_csv_unsorted():
    with pytest.raises(UnsortedStream) as exc:
        parse_csv("900,5,5,1\n100,5,5,1", G16)
    assert exc.value.index == 1


def test_parse_csv_comments_blank_and_zero_polarity():
    s = parse_csv("# header\n\n10,1,2,0\n  # indented comment\n20,3,4,1\n", G16)
    assert s.p.tolist() == [-1, 1]
    assert s.y.tolist() == [2, 4]


def test_parse_csv_accepts_file_like():
    s = parse_csv(io.StringIO("1,0,0,1\n"), G16)
    assert len(s) == 1


@pytest.mark.parametrize(
    "text, line",
    [("1,2,3", 1), ("# c\n1,2,3,x", 2), ("1,2,3,2", 1), ("1.5,2,3,1", 1), ("-4,1,1,1", 1)],
)
def test_parse_csv_malformed(text, line):
    with pytest.raises(MalformedLine) as exc:
        parse_csv(text, G16)
    assert exc.value.line_number == line


def test_stream_rejects_bad_polarity():
    with pytest.raises(BadPolarity):
        EventStream(G16, [1], [0], [0], [0])


def test_stream_is_immutable():
    s = parse_csv("1,0,0,1", G16)
    with pytest.raises(ValueError):
        s.t[0] = 5


def test_ties_keep_storage_order():
    s = parse_csv("5,1,1,1\n5,2,2,-1\n5,0,0,1", G16)
    assert s.x.tolist() == [1, 2, 0]


def test_sort_events_is_stable():
    s = sort_events(([9, 5, 5], [0, 1, 2], [0, 0, 0], [1, -1, 1]), G16)
    assert s.t.tolist() == [5, 5, 9]
    assert s.x.tolist() == [1, 2, 0]


def test_binary_empty_payload():
    data = struct.pack("<4sHHQ", b"EVS1", 16, 16, 0)
    s = read_binary(data)
    assert len(s) == 0 and s.geometry == G16


def test_binary_round_trip_1000(rng):
    s = random_stream(rng, 1000, 64, 48, 10**9)
    data = write_binary(s)
    back = read_binary(data)
    assert back == s
    assert write_binary(back) == data


def test_binary_record_layout():
    s = EventStream(SensorGeometry(640, 480), [2**40 + 7], [639], [479], [-1])
    data = write_binary(s)
    assert data[:4] == b"EVS1"
    assert struct.unpack_from("<HHQ", data, 4) == (640, 480, 1)
    t, x, y, p, pad = struct.unpack_from("<QHHbB", data, 16)
    assert (t, x, y, p, pad) == (2**40 + 7, 639, 479, -1, 0)
    assert len(data) == 16 + 14


def test_binary_bad_magic():
    data = bytearray(write_binary(EventStream.empty(G16)))
    data[:4] = b"EVS0"
    with pytest.raises(BadMagic):
        read_binary(bytes(data))


def test_binary_truncated():
    data = write_binary(parse_csv("1,0,0,1\n2,1,1,1", G16))
    with pytest.raises(TruncatedRecord):
        read_binary(data[:-3])
    with pytest.raises(TruncatedRecord):
        read_binary(data[:10])


def test_binary_unsorted():
    rec = struct.pack("<QHHbB", 9, 0, 0, 1, 0) + struct.pack("<QHHbB", 3, 0, 0, 1, 0)
    data = struct.pack("<4sHHQ", b"EVS1", 4, 4, 2) + rec
    with pytest.raises(UnsortedStream) as exc:
        read_binary(data)
    assert exc.value.index == 1


@given(streams(max_events=60))
def test_binary_round_trip_property(s):
    assert read_binary(write_binary(s)) == s


@given(streams(max_events=60))
def test_csv_round_trip_property(s):
    assert parse_csv(format_csv(s), s.geometry) == s


def test_slice_boundaries():
    s = parse_csv("100,0,0,1\n300,1,0,1\n500,2,0,1", G16)
    assert slice_events(s, TimeWindow(100, 300), closed_end=True).t.tolist() == [100, 300]
    assert slice_events(s, TimeWindow(100, 300), closed_end=False).t.tolist() == [100]
    assert len(slice_events(s, TimeWindow(600, 700))) == 0


@settings(max_examples=60)
@given(streams(max_events=80, max_t=1000), st.lists(st.integers(1, 999), max_size=6, unique=True))
def test_slices_partition_stream(s, cuts):
    edges = [0] + sorted(cuts) + [1000]
    pieces = [
        slice_events(s, TimeWindow(a, b), closed_end=(b == edges[-1]))
        for a, b in zip(edges[:-1], edges[1:])
    ]
    assert np.array_equal(np.concatenate([p.t for p in pieces]), s.t)
    assert np.array_equal(np.concatenate([p.x for p in pieces]), s.x)


def test_natural_window():
    s = parse_csv("100,0,0,1\n900,0,0,1", G16)
    assert natural_window(s) == TimeWindow(100, 900)
    with pytest.raises(DegenerateStream):
        natural_window(parse_csv("100,0,0,1", G16))
    with pytest.raises(DegenerateStream):
        natural_window(parse_csv("100,0,0,1\n100,1,1,1", G16))


def test_window_rejects_zero_duration():
    with pytest.raises(DegenerateWindow):
        TimeWindow(5, 5)
