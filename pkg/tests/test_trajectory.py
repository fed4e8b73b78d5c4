import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from labits.aplof import FlowField
from labits.errors import BadMagic, DimMismatch, EmptyIterates, NoValidPixels, TauOutOfRange, TruncatedRecord, Underdetermined
from labits.events import SensorGeometry, TimeWindow
from labits.synth import Circular, PointCloud, SceneObject, SyntheticScene, ground_truth
from labits.trajectory import (
    BezierTrajectoryField,
    TrajectoryGroundTruth,
    bernstein_matrix,
    bezier_eval,
    fit_bezier,
    read_bezier,
    trajectory_loss,
    trajectory_metrics,
    two_view_metrics,
    write_bezier,
)

from reference import bernstein_direct


def field_of(cp):
    return BezierTrajectoryField(np.asarray(cp, float))


def gt_from(field, times):
    return TrajectoryGroundTruth(times, [bezier_eval(field, T) for T in times])


def uniform_field(n, h, w, point):
    cp = np.zeros((n, h, w, 2))
    cp[-1] = point
    return BezierTrajectoryField(cp)


# --- evaluation ---------------------------------------------------------------------


def test_linear_midpoint():
    f = field_of(np.full((1, 1, 1, 2), [4.0, 2.0]))
    assert bezier_eval(f, 0.5).flow[0, 0].tolist() == [2.0, 1.0]


def test_endpoints(rng):
    f = field_of(rng.normal(size=(10, 3, 4, 2)) * 20)
    assert not bezier_eval(f, 0.0).flow.any()
    np.testing.assert_allclose(bezier_eval(f, 1.0).flow, f.control_points[-1], atol=1e-6)


def test_eval_matches_direct_bernstein(rng):
    cp = rng.normal(size=(10, 2, 3, 2)) * 5
    f = field_of(cp)
    for tau in (0.0, 0.13, 0.5, 0.77, 1.0):
        np.testing.assert_allclose(bezier_eval(f, tau).flow, bernstein_direct(cp, tau), atol=1e-9)


def test_bernstein_matrix_matches_eval(rng):
    cp = rng.normal(size=(4, 1, 1, 2))
    times = [0.2, 0.6, 0.9]
    a = bernstein_matrix(times, 4)
    np.testing.assert_allclose(a @ cp[:, 0, 0], [bezier_eval(field_of(cp), t).flow[0, 0] for t in times], atol=1e-12)


@settings(max_examples=60)
@given(st.integers(1, 10), st.floats(0, 1), st.integers(0, 2**32 - 1))
def test_convex_hull(n, tau, seed):
    cp = np.random.default_rng(seed).uniform(-50, 50, (n, 1, 1, 2))
    pts = np.concatenate([np.zeros((1, 2)), cp[:, 0, 0]])
    d = bezier_eval(field_of(cp), tau).flow[0, 0]
    assert (d >= pts.min(axis=0) - 1e-9).all() and (d <= pts.max(axis=0) + 1e-9).all()


@pytest.mark.parametrize("tau", [-0.01, 1.01])
def test_tau_out_of_range(tau):
    with pytest.raises(TauOutOfRange):
        bezier_eval(field_of(np.zeros((2, 1, 1, 2))), tau)


def test_normalized_time():
    f = BezierTrajectoryField(np.zeros((1, 1, 1, 2)), t_ref=1000, t_target=3000)
    assert f.normalized_time(2500) == 0.75


# --- loss ----------------------------------------------------------------------------


def test_loss_zero_for_exact_iterate(rng):
    f = field_of(rng.normal(size=(3, 4, 4, 2)))
    assert trajectory_loss([f], gt_from(f, [0.5, 1.0])) == 0.0


def test_loss_discount_two_iterates():
    gt = gt_from(uniform_field(1, 2, 2, (0.0, 0.0)), [1.0])
    off = uniform_field(1, 2, 2, (1.0, 0.0))
    exact = uniform_field(1, 2, 2, (0.0, 0.0))
    assert trajectory_loss([off, exact], gt, 0.8) == pytest.approx(0.8, abs=1e-12)


def test_loss_three_iterates_two_times():
    # degree-1 fields so B(T) = T * P_1; gt P_1 = (0, 0)
    gt = gt_from(uniform_field(1, 1, 2, (0.0, 0.0)), [0.5, 1.0])
    its = [uniform_field(1, 1, 2, p) for p in [(2.0, 0.0), (0.0, -1.0), (0.5, 0.5)]]
    # per-time L1 sums: it1 1+2=3, it2 0.5+1=1.5, it3 0.5+1=1.5
    expect = (0.8**2 * 3.0 + 0.8 * 1.5 + 1.0 * 1.5) / 2
    assert trajectory_loss(its, gt) == pytest.approx(expect, abs=1e-9)


def test_loss_errors():
    gt = gt_from(uniform_field(1, 2, 2, (0, 0)), [1.0])
    with pytest.raises(EmptyIterates):
        trajectory_loss([], gt)
    with pytest.raises(DimMismatch):
        trajectory_loss([uniform_field(1, 3, 2, (0, 0))], gt)


def test_loss_ignores_invalid_gt_pixels():
    flow = np.zeros((1, 2, 2))
    gt = TrajectoryGroundTruth([1.0], [FlowField(flow, np.array([[True, False]]))])
    cp = np.zeros((1, 1, 2, 2))
    cp[0, 0, 1] = (100.0, 100.0)
    assert trajectory_loss([field_of(cp)], gt) == 0.0


# --- metrics -------------------------------------------------------------------------


def test_two_view_identity_and_345():
    g = FlowField.uniform(3, 3, 0.0, 0.0)
    assert two_view_metrics(g, g) == (0.0, 0.0)
    assert two_view_metrics(FlowField.uniform(3, 3, 3.0, 4.0), g)[0] == pytest.approx(5.0, abs=1e-12)


def test_angular_error_sixty_degrees():
    _, ae = two_view_metrics(FlowField.uniform(2, 2, 0.0, 1.0), FlowField.uniform(2, 2, 1.0, 0.0))
    assert ae == pytest.approx(60.0, abs=1e-4)
    assert math.degrees(math.acos(0.5)) == pytest.approx(ae, abs=1e-9)


def test_metrics_need_valid_pixels():
    a = FlowField.uniform(2, 2, 0, 0, valid=False)
    with pytest.raises(NoValidPixels):
        two_view_metrics(a, a)


def test_uniform_offset_tepe(rng):
    f = field_of(rng.normal(size=(3, 4, 5, 2)))
    times = [0.25, 0.5, 1.0]
    shifted = TrajectoryGroundTruth(
        times, [FlowField(bezier_eval(f, T).flow + [1.0, 0.0], np.ones((4, 5), bool)) for T in times]
    )
    tepe, _ = trajectory_metrics(f, shifted)
    assert tepe == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=30)
@given(st.floats(0.1, 20.0), st.integers(0, 2**32 - 1))
def test_tepe_scales_linearly(s, seed):
    rng = np.random.default_rng(seed)
    pred = field_of(rng.normal(size=(3, 2, 2, 2)))
    gt = gt_from(field_of(rng.normal(size=(3, 2, 2, 2))), [0.5, 1.0])
    scaled_gt = TrajectoryGroundTruth(gt.times, [FlowField(f.flow * s, f.valid) for f in gt.flows])
    tepe, _ = trajectory_metrics(pred, gt)
    tepe_s, _ = trajectory_metrics(field_of(pred.control_points * s), scaled_gt)
    assert tepe_s == pytest.approx(s * tepe, rel=1e-9, abs=1e-12)


# --- fitting --------------------------------------------------------------------------


def test_fit_recovers_degree_three(rng):
    truth = field_of(rng.uniform(-30, 30, (3, 6, 5, 2)))
    gt = gt_from(truth, np.arange(1, 11) / 10)
    fit = fit_bezier(gt, 3)
    np.testing.assert_allclose(fit.control_points, truth.control_points, atol=1e-6)
    tepe, tae = trajectory_metrics(fit, gt)
    assert tepe < 1e-6 and tae < 1e-6


def test_fit_constant_velocity_degree_one():
    gt = TrajectoryGroundTruth([0.5, 1.0], [FlowField.uniform(2, 2, 1.5, -1), FlowField.uniform(2, 2, 3.0, -2)])
    np.testing.assert_allclose(fit_bezier(gt, 1).control_points[0], np.tile([3.0, -2.0], (2, 2, 1)), atol=1e-12)


def test_fit_circular_higher_degree_is_better():
    scene = SyntheticScene(
        SensorGeometry(8, 8),
        TimeWindow(0, 1_000_000),
        (SceneObject(PointCloud(((4, 4), (2, 6))), Circular(3.0, 5.0)),),
    )
    gt = ground_truth(scene).trajectory_ground_truth(20)
    straight = fit_bezier(gt, 1)
    curved = fit_bezier(gt, 10)
    assert trajectory_metrics(curved, gt)[0] < trajectory_metrics(straight, gt)[0]
    # a line to the true endpoint misses the curve in between
    line = uniform_field(10, 8, 8, gt.flows[-1].flow)
    assert trajectory_metrics(line, gt)[0] > 0.5


def test_fit_underdetermined():
    gt = gt_from(uniform_field(1, 1, 1, (1, 1)), [0.5, 1.0])
    with pytest.raises(Underdetermined):
        fit_bezier(gt, 3)


def test_ground_truth_validation():
    f = FlowField.uniform(1, 1, 0, 0)
    with pytest.raises(ValueError):
        TrajectoryGroundTruth([0.5, 0.5], [f, f])
    with pytest.raises(TauOutOfRange):
        TrajectoryGroundTruth([1.5], [f])
    with pytest.raises(DimMismatch):
        TrajectoryGroundTruth([0.5, 1.0], [f, FlowField.uniform(2, 1, 0, 0)])


# --- file format ----------------------------------------------------------------------


def test_bezier_round_trip(rng):
    f = BezierTrajectoryField(rng.normal(size=(4, 3, 5, 2)).astype(np.float32), 10, 100_010)
    data = write_bezier(f)
    assert data[:4] == b"BZF1" and len(data) == 4 + 28 + 3 * 5 * 4 * 8
    back = read_bezier(data)
    assert np.array_equal(back.control_points, f.control_points)
    assert (back.t_ref, back.t_target) == (10, 100_010)
    assert write_bezier(back) == data


def test_bezier_format_errors():
    data = write_bezier(field_of(np.zeros((1, 1, 1, 2))))
    with pytest.raises(BadMagic):
        read_bezier(b"BZF0" + data[4:])
    with pytest.raises(TruncatedRecord):
        read_bezier(data[:-2])


def test_angular_error_matches_arccos_formula(rng):
    p = rng.normal(size=(6, 6, 2)) * 4
    g = rng.normal(size=(6, 6, 2)) * 4
    ones = np.ones((6, 6), bool)
    _, ae = two_view_metrics(FlowField(p, ones), FlowField(g, ones))
    num = (p * g).sum(-1) + 1
    den = np.sqrt((p**2).sum(-1) + 1) * np.sqrt((g**2).sum(-1) + 1)
    assert ae == pytest.approx(np.degrees(np.arccos(num / den)).mean(), abs=1e-9)
