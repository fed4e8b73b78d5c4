"""Bezier fits of circular motion: TEPE/TAE as the curve degree grows."""

import argparse

from labits.events import SensorGeometry, TimeWindow
from labits.synth import Circular, PointCloud, SceneObject, SyntheticScene, ground_truth
from labits.trajectory import fit_bezier, trajectory_metrics


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--radius", type=float, default=6.0)
    ap.add_argument("--rate", type=float, default=6.0, help="angular rate (rad/s)")
    ap.add_argument("--samples", type=int, default=20)
    ap.add_argument("--degrees", default="1,2,3,5,10")
    args = ap.parse_args()

    scene = SyntheticScene(
        SensorGeometry(16, 16),
        TimeWindow(0, 1_000_000),
        (SceneObject(PointCloud(((8, 8),)), Circular(args.radius, args.rate)),),
    )
    gt = ground_truth(scene).trajectory_ground_truth(args.samples)
    print(f"{'n':>3} {'TEPE':>10} {'TAE':>10}")
    for n in map(int, args.degrees.split(",")):
        tepe, tae = trajectory_metrics(fit_bezier(gt, n), gt)
        print(f"{n:>3} {tepe:>10.5f} {tae:>10.5f}")


if __name__ == "__main__":
    main()
