"""Time the thresholding kernels (compiled vs numpy) and one full solver iteration.

    python3 benchmarks/bench_threshold.py [--sizes 200x240,500x600] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from manifold_rpca import _backend, probgen
from manifold_rpca.solver import SolverConfig, initialize, step
from manifold_rpca.thresholding import ObservationMask, hard_threshold, hard_threshold_partial


def parse_sizes(text):
    return [tuple(int(v) for v in s.split("x")) for s in text.split(",")]


def best_ms(fn, repeat, number=3):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number * 1e3


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=parse_sizes, default=parse_sizes("200x240,500x600,1000x1200"))
    ap.add_argument("--gamma", type=float, default=0.2)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    names = sorted(_backend.KERNELS)
    print(f"default backend: {_backend.BACKEND}; available: {', '.join(names)}")
    print(f"{'size':>10s} {'op':>8s} " + " ".join(f"{n:>10s}" for n in names) + "   speedup")
    for n1, n2 in args.sizes:
        A = rng.standard_normal((n1, n2))
        mask = ObservationMask(rng.random((n1, n2)) < 0.5, 0.5)
        for label, op in (("full", lambda b: hard_threshold(A, args.gamma, backend=b)),
                          ("p=0.5", lambda b: hard_threshold_partial(A, args.gamma, mask, backend=b))):
            times = {b: best_ms(lambda: op(b), args.repeat) for b in names}
            speed = times.get("python", np.nan) / times.get("cython", np.nan)
            print(f"{f'{n1}x{n2}':>10s} {label:>8s} " + " ".join(f"{times[b]:9.2f}ms" for b in names)
                  + f"   {speed:6.2f}x")
    pr = probgen.setting1(500, 600, seed=0, per_column_count=25)
    cfg = SolverConfig(5, 0.2, 0.7)
    L = initialize(pr.Y, cfg)
    for retraction in ("projective", "orthographic"):
        cfg.retraction = retraction
        ms = best_ms(lambda: step(L, pr.Y, cfg), args.repeat)
        print(f"one {retraction} iteration at 500x600 (default backend): {ms:.2f}ms")


if __name__ == "__main__":
    main()
