"""Command-line front end.

Exit codes: 0 success, 2 usage or parse error, 3 domain error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import aplof, bench, representations as rep, synth, trajectory, viz
from .errors import LabitsError, SceneParseError
from .events import SensorGeometry, TimeWindow, format_csv, parse_csv, read_binary, slice_events, write_binary

EXIT_USAGE = 2
EXIT_DOMAIN = 3


class UsageError(Exception):
    pass


def _read_bytes(path):
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _write_bytes(path, data):
    Path(path).write_bytes(data)


def _parse_size(text):
    try:
        w, h = (int(v) for v in text.lower().split("x"))
        return SensorGeometry(w, h)
    except ValueError:
        raise UsageError(f"--size must look like WxH, got {text!r}") from None


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def load_events(path, size=None):
    if str(path).lower().endswith(".csv"):
        if size is None:
            raise UsageError("CSV input needs --size WxH")
        return parse_csv(_read_bytes(path).decode(), _parse_size(size))
    return read_binary(_read_bytes(path))


def save_events(path, stream):
    if str(path).lower().endswith(".csv"):
        Path(path).write_text(format_csv(stream))
    else:
        _write_bytes(path, write_binary(stream))


def _emit(args, record, text):
    if getattr(args, "json_lines", False):
        print(json.dumps(record))
    else:
        print(text)


# --- subcommands -----------------------------------------------------------------


def cmd_synth(args):
    path = Path(args.scene)
    if not path.is_file():
        raise UsageError(f"scene file not found: {path}")
    scene = synth.parse_scene(path.read_text())
    stream = synth.emit_events(scene, seed=args.seed)
    save_events(args.events, stream)
    print(f"events: {len(stream)} -> {args.events}")

    gt = synth.ground_truth(scene)
    if args.flows:
        prefix = args.flow_prefix or str(Path(args.events).with_suffix("")) + "_flow"
        for tau in _float_list(args.flows):
            out = f"{prefix}_{int(round(tau * 1e6))}us.flw"
            _write_bytes(out, aplof.write_flow(gt.flow_at(tau)))
            print(f"flow at {tau:g}s -> {out}")
    if args.traj:
        field = trajectory.fit_bezier(
            gt.trajectory_ground_truth(2 * args.degree),
            args.degree,
            scene.window.t_start,
            scene.window.t_end,
        )
        _write_bytes(args.traj, trajectory.write_bezier(field))
        print(f"trajectory (degree {args.degree}) -> {args.traj}")
    return 0


def build_representation(stream, kind, bins=None, depth=None, window=None, future="earliest", workers=1):
    """Library dispatch used by ``repr``; raises UsageError on missing kind flags."""
    if kind in ("labits", "voxel") and bins is None:
        raise UsageError(f"--kind {kind} needs --bins")
    if kind == "tore" and depth is None:
        raise UsageError("--kind tore needs --depth")
    if kind == "labits":
        return rep.build_labits(stream, rep.LabitsConfig(bins, window, future), workers)
    if kind == "voxel":
        return rep.build_voxel_grid(stream, rep.VoxelConfig(bins, window), workers)
    if kind == "tore":
        return rep.build_tore(stream, rep.ToreConfig(depth, window))
    if kind == "ts":
        return rep.build_time_surface(stream, window)
    if window is not None:
        stream = slice_events(stream, window, closed_end=True)
    if kind == "frame":
        return rep.build_event_frame(stream)
    if kind == "count":
        return rep.build_event_count(stream)
    raise UsageError(f"unknown kind {kind!r}")


def cmd_repr(args):
    if (args.t0 is None) != (args.t1 is None):
        raise UsageError("--t0 and --t1 must be given together")
    stream = load_events(args.events, args.size)
    window = None if args.t0 is None else TimeWindow(args.t0, args.t1)
    tensor = build_representation(
        stream, args.kind, args.bins, args.depth, window, args.future, args.workers
    )
    _write_bytes(args.output, rep.write_tensor(tensor))
    print(f"{args.kind}: {'x'.join(map(str, tensor.shape))} -> {args.output}")
    return 0


def cmd_aplof(args):
    tensor = rep.read_tensor(_read_bytes(args.labits))
    if tensor.ndim != 3 or not 0 <= args.layer < tensor.shape[0]:
        raise UsageError(f"layer {args.layer} out of range for tensor {tensor.shape}")
    layer = tensor[args.layer]
    est = aplof.aplof_from_labits(layer, args.tau_range, args.beta, args.patch, args.min_support)
    _write_bytes(args.output, aplof.write_flow(est))
    record = {"valid_pixels": int(est.valid.sum()), "output": args.output}
    text = f"estimated APLOF at {record['valid_pixels']} pixels -> {args.output}"
    if args.gt:
        minus, plus, at_tau = (aplof.read_flow(_read_bytes(p)) for p in args.gt)
        mask = aplof.apm_high(layer, args.beta)
        gt = aplof.aplof_ground_truth(minus, plus, at_tau, mask)
        # estimator is px/s; ground truth is px over the bracketing span
        scaled = aplof.FlowField(est.flow * args.gt_span, est.valid)
        both = scaled.valid & gt.valid
        if not both.any():
            raise aplof.NoValidPixels("estimate and ground truth share no valid pixels")
        l1 = float(np.abs(scaled.flow[both] - gt.flow[both]).sum(axis=1).mean())
        record.update(mean_l1=l1, joint_pixels=int(both.sum()))
        text += f"\nmean L1 vs ground truth: {l1:.4f} px over {int(both.sum())} pixels"
    _emit(args, record, text)
    return 0


def cmd_traj(args):
    pred = trajectory.read_bezier(_read_bytes(args.pred))
    times = _float_list(args.times)
    if len(times) != len(args.gt):
        raise UsageError(f"{len(args.gt)} flow files but {len(times)} times")
    flows = [aplof.read_flow(_read_bytes(p)) for p in args.gt]
    gt = trajectory.TrajectoryGroundTruth(times, flows)
    tepe, tae = trajectory.trajectory_metrics(pred, gt)
    epe, ae = trajectory.two_view_metrics(trajectory.bezier_eval(pred, gt.times[-1]), flows[-1])
    record = {"tepe": tepe, "tae": tae, "epe": epe, "ae": ae}
    if args.json_lines:
        print(json.dumps(record))
    else:
        for k, v in record.items():
            print(f"{k.upper():<4} {v:.4f}")
    return 0


def cmd_bench(args):
    config = bench.BenchConfig(
        packet_count=args.packets,
        packet_duration_us=args.duration,
        repeats=args.repeats,
        warmup=args.warmup,
        labits_bins=args.labits_bins,
        voxel_bins=args.voxel_bins,
        tore_depth=args.tore_depth,
        workers=args.workers,
    )
    packets = bench.make_packets(config, args.seed, SensorGeometry(args.width, args.height))
    report = bench.run_bench(packets, config)
    sys.stdout.write(report.to_json_lines() if args.json_lines else report.to_table())
    return 0


def cmd_viz(args):
    tensor = rep.read_tensor(_read_bytes(args.tensor))
    if tensor.ndim != 3 or not 0 <= args.layer < tensor.shape[0]:
        raise UsageError(f"layer {args.layer} out of range for tensor {tensor.shape}")
    _write_bytes(args.output, viz.render_layer(tensor, args.layer, args.colormap, args.scale))
    print(f"layer {args.layer} -> {args.output}")
    return 0


# --- parser ---------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="labits", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="emit events and exact ground truth from a scene file")
    s.add_argument("scene")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--events", required=True, help="output events (.csv or binary)")
    s.add_argument("--flows", help="comma-separated times (s from window start) for FLW1 dumps")
    s.add_argument("--flow-prefix", help="prefix for flow files (default: <events>_flow)")
    s.add_argument("--traj", help="output BZF1 trajectory field")
    s.add_argument("--degree", type=int, default=trajectory.DEFAULT_DEGREE)
    s.set_defaults(func=cmd_synth)

    r = sub.add_parser("repr", help="build a dense representation")
    r.add_argument("events")
    r.add_argument("--kind", required=True, choices=["labits", "voxel", "tore", "ts", "frame", "count"])
    r.add_argument("--bins", type=int)
    r.add_argument("--depth", type=int)
    r.add_argument("--t0", type=int, help="window start (µs)")
    r.add_argument("--t1", type=int, help="window end (µs)")
    r.add_argument("--future", choices=["earliest", "latest"], default="earliest")
    r.add_argument("--size", help="WxH, required for CSV input")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("-o", "--output", required=True)
    r.set_defaults(func=cmd_repr)

    a = sub.add_parser("aplof", help="analytic APLOF from one Labits layer")
    a.add_argument("labits")
    a.add_argument("--layer", type=int, required=True)
    a.add_argument("--tau-range", type=float, required=True, help="probe spacing in seconds")
    a.add_argument("--beta", type=float, default=0.3)
    a.add_argument("--patch", type=int, default=5)
    a.add_argument("--min-support", type=int, default=6)
    a.add_argument("--gt", nargs=3, metavar=("MINUS", "PLUS", "TAU"), help="FLW1 flows at tau-, tau+, tau")
    a.add_argument("--gt-span", type=float, default=0.02, help="seconds between the MINUS and PLUS flows")
    a.add_argument("--json-lines", action="store_true")
    a.add_argument("-o", "--output", required=True)
    a.set_defaults(func=cmd_aplof)

    t = sub.add_parser("traj", help="trajectory metrics for a BZF1 prediction")
    t.add_argument("pred")
    t.add_argument("--gt", nargs="+", required=True, help="FLW1 ground-truth flows")
    t.add_argument("--times", required=True, help="comma-separated normalized times")
    t.add_argument("--json-lines", action="store_true")
    t.set_defaults(func=cmd_traj)

    b = sub.add_parser("bench", help="time the representation builders")
    b.add_argument("--packets", type=int, default=50)
    b.add_argument("--duration", type=int, default=100_000, help="packet length (µs)")
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--warmup", type=int, default=1)
    b.add_argument("--labits-bins", type=int, default=65)
    b.add_argument("--voxel-bins", type=int, default=65)
    b.add_argument("--tore-depth", type=int, default=3)
    b.add_argument("--workers", type=int, default=1, help=">1 also reports the parallel mode")
    b.add_argument("--width", type=int, default=240)
    b.add_argument("--height", type=int, default=180)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--json-lines", action="store_true")
    b.set_defaults(func=cmd_bench)

    v = sub.add_parser("viz", help="render one tensor layer as PGM/PPM")
    v.add_argument("tensor")
    v.add_argument("--layer", type=int, default=0)
    v.add_argument("--colormap", choices=["gray", "viridis"], default="gray")
    v.add_argument("--scale", choices=["affine", "minmax"], default="affine")
    v.add_argument("-o", "--output", required=True)
    v.set_defaults(func=cmd_viz)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, SceneParseError) as exc:
        print(f"labits {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LabitsError as exc:
        print(f"labits {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
