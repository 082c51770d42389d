"""Pipeline time against image size on synthetic phantoms.

    python scripts/scaling.py [--sizes 512x384 1022x757 1445x1071 2044x1514] [--repeats 5]

Prints median stage timings per size and the time ratio between consecutive
sizes; a linear-time pipeline gives time ratios close to the pixel ratios.
"""

import argparse
import statistics

from bstd.decompose import run
from bstd.phantoms import xray_phantom


def parse_size(text):
    w, h = text.lower().split("x")
    return int(w), int(h)


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--sizes", nargs="+", type=parse_size,
                   default=[(512, 384), (1022, 757), (1445, 1071), (2044, 1514)])
    p.add_argument("--repeats", type=int, default=5)
    args = p.parse_args()

    rows = []
    for w, h in args.sizes:
        f = xray_phantom(w, h, seed=0).f
        result = run(f)  # warm-up
        timings = [run(f).timings for _ in range(args.repeats)]
        med = {k: statistics.median(t[k] for t in timings) for k in timings[0]}
        rows.append((w, h, med, result.stats.iterations))

    print(f"{'size':>11} {'mask':>7} {'solve':>7} {'decomp':>7} {'total':>7} {'Mpix/s':>7} {'iters':>5}")
    for w, h, med, iters in rows:
        print(f"{w:>5}x{h:<5} {med['mask_s']:7.3f} {med['solve_s']:7.3f} {med['decompose_s']:7.3f} "
              f"{med['total_s']:7.3f} {w * h / 1e6 / med['total_s']:7.2f} {iters:5d}")
    for (w0, h0, m0, _), (w1, h1, m1, _) in zip(rows, rows[1:]):
        print(f"{w0}x{h0} -> {w1}x{h1}: pixels x{w1 * h1 / (w0 * h0):.2f}, "
              f"time x{m1['total_s'] / m0['total_s']:.2f}")


if __name__ == "__main__":
    main()
