"""Layered bidirectional time surfaces and companion tools for event cameras."""

from .aplof import (
    ActivePixelMask,
    AplofPair,
    FlowField,
    aplof_from_labits,
    aplof_ground_truth,
    aplof_loss,
    apm_high,
    apm_low,
)
from .events import EventStream, SensorGeometry, TimeWindow, natural_window, slice_events
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
from .trajectory import (
    BezierTrajectoryField,
    TrajectoryGroundTruth,
    bezier_eval,
    fit_bezier,
    trajectory_loss,
    trajectory_metrics,
    two_view_metrics,
)

__version__ = "0.1.0"
