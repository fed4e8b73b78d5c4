"""Error of backward and central differences on a smooth trajectory as the step halves.

Ratios near 2 indicate first order, near 4 second order.
"""

import argparse

from labits.aplof import backward_difference, central_difference
from labits.synth import Polynomial


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--coeffs", default="0,80,-600,9000", help="x(t) Taylor coefficients")
    ap.add_argument("--t", type=float, default=0.05)
    ap.add_argument("--h0", type=float, default=0.01)
    ap.add_argument("--halvings", type=int, default=6)
    args = ap.parse_args()

    motion = Polynomial(tuple(float(c) for c in args.coeffs.split(",")))
    f = lambda s: motion.displacement(s)[0]
    truth = motion.velocity(args.t)[0]
    prev = None
    print(f"{'h':>12} {'backward err':>14} {'ratio':>7} {'central err':>14} {'ratio':>7}")
    for k in range(args.halvings + 1):
        h = args.h0 / 2**k
        eb = abs(backward_difference(f, args.t, h) - truth)
        ec = abs(central_difference(f, args.t, h) - truth)
        rb = f"{prev[0] / eb:7.3f}" if prev else " " * 7
        rc = f"{prev[1] / ec:7.3f}" if prev else " " * 7
        print(f"{h:>12.3e} {eb:>14.6e} {rb} {ec:>14.6e} {rc}")
        prev = (eb, ec)


if __name__ == "__main__":
    main()
