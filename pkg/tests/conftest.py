import numpy as np
import pytest
from hypothesis import strategies as st

from labits.events import EventStream, SensorGeometry


def random_stream(rng, n, width, height, t_max, hot=None):
    """Sorted random events; ``hot=(x, y, count)`` appends a burst at one pixel."""
    t = rng.integers(0, t_max + 1, size=n)
    x = rng.integers(0, width, size=n)
    y = rng.integers(0, height, size=n)
    p = rng.choice([-1, 1], size=n)
    if hot is not None:
        hx, hy, hn = hot
        t = np.concatenate([t, rng.integers(0, t_max + 1, size=hn)])
        x = np.concatenate([x, np.full(hn, hx)])
        y = np.concatenate([y, np.full(hn, hy)])
        p = np.concatenate([p, rng.choice([-1, 1], size=hn)])
    order = np.argsort(t, kind="stable")
    return EventStream(SensorGeometry(width, height), t[order], x[order], y[order], p[order])


def as_tuples(stream):
    return list(zip(stream.t.tolist(), stream.x.tolist(), stream.y.tolist(), stream.p.tolist()))


@st.composite
def streams(draw, max_events=200, max_side=12, max_t=5_000):
    w = draw(st.integers(1, max_side))
    h = draw(st.integers(1, max_side))
    n = draw(st.integers(0, max_events))
    ts = sorted(draw(st.lists(st.integers(0, max_t), min_size=n, max_size=n)))
    xs = draw(st.lists(st.integers(0, w - 1), min_size=n, max_size=n))
    ys = draw(st.lists(st.integers(0, h - 1), min_size=n, max_size=n))
    ps = draw(st.lists(st.sampled_from([-1, 1]), min_size=n, max_size=n))
    return EventStream(SensorGeometry(w, h), ts, xs, ys, ps)


@pytest.fixture
def rng():
    return np.random.default_rng(20241018)


# --- one summary line per acceptance criterion ---------------------------------------

_criteria = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or report.failed:
        props = dict(report.user_properties)
        number = int(report.nodeid.split("test_criterion_")[1][:2])
        _criteria[number] = ("PASS" if report.passed else "FAIL", props.get("title", ""), props.get("detail", ""))


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_setup(item):
    if item.nodeid.count("test_acceptance.py::test_criterion_") and item.function.__doc__:
        item.user_properties.append(("title", item.function.__doc__.strip().splitlines()[0]))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        status, title, detail = _criteria[number]
        line = f"criterion {number:2d}: {status}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
