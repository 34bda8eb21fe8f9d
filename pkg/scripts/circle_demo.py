"""Recover a circle rotation from a couple of seed matches.

    python scripts/circle_demo.py --n 256 --shift 7 --seeds 0 96
"""

import argparse

import numpy as np

from pmf import CircleSpace, MatchSet, PmfConfig, farthest_point_sampling, pmf_multiscale, pmf_single_scale


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=256)
    ap.add_argument("--shift", type=int, default=7)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 96])
    ap.add_argument("--schedule", type=int, nargs="+", default=[16, 64])
    args = ap.parse_args()

    s = CircleSpace(args.n)
    truth = (np.arange(args.n) + args.shift) % args.n
    xi = np.array(args.seeds)
    init = MatchSet(xi, truth[xi])

    single = pmf_single_scale(s, s, init, PmfConfig(record_history=True))
    for it, p in enumerate(single.history or [], start=1):
        print(f"iteration {it}: {100 * np.mean(p.forward == truth):5.1f}% correct")
    print(f"single-scale: {single.iterations_run} solves, objective {single.objective_trace[-1]:.6g}")

    sizes = [k for k in args.schedule if k < args.n] + [args.n]
    hx = farthest_point_sampling(s, sizes, seed=int(xi[0]))
    hy = farthest_point_sampling(s, sizes, seed=int(truth[xi[0]]))
    multi = pmf_multiscale(s, s, hx, hy, init)
    print(f"multiscale {sizes}: {100 * np.mean(multi.final.forward == truth):.1f}% correct, "
          f"{len(multi.meta['widenings'])} widenings")


if __name__ == "__main__":
    main()
