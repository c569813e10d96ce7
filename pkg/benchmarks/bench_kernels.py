"""Compare the numba and numpy tree-sweep kernels.

Runs the path-product sweep on random preorder trees and on the unfolded
dynamic incursion model, then times one end-to-end unfolded score with each
backend in a subprocess (the backend is fixed at import time).

    python3 benchmarks/bench_kernels.py --sizes 10000 100000 1000000
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from ceg_ara._kernels import HAVE_NUMBA, Sweeper


def random_preorder(rng, n, max_branch=4):
    """parent[i] < i for every i > 0: attach each vertex to a recent one."""
    parent = np.empty(n, dtype=np.int64)
    parent[0] = -1
    for i in range(1, n):
        parent[i] = i - 1 - int(rng.integers(0, min(i, max_branch)))
    return parent


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


END_TO_END = """
import time
from ceg_ara import DcegModel, DynamicIntervention, builtin_model
from ceg_ara.dynamic import unfolded_delta_score
b = builtin_model("incursion_dynamic")
m = DcegModel(b.staged_tree, 0, {end}, 0.3)
d = DynamicIntervention(b.intervention("d1"))
unfolded_delta_score(DcegModel(b.staged_tree, 0, 1, 0.3), d, b.profile("adaptive"))
t0 = time.perf_counter()
x = unfolded_delta_score(m, d, b.profile("adaptive"))
print(repr(x), time.perf_counter() - t0)
"""


def end_to_end(steps, disable):
    env = dict(os.environ)
    if disable:
        env["CEG_ARA_DISABLE_NUMBA"] = "1"
    else:
        env.pop("CEG_ARA_DISABLE_NUMBA", None)
    out = subprocess.run([sys.executable, "-c", END_TO_END.format(end=steps - 1)], env=env,
                         capture_output=True, text=True, check=True).stdout.split()
    return float(out[0]), float(out[1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[10_000, 100_000, 1_000_000])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--steps", type=int, default=5, help="horizon of the end-to-end run")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba is not installed; only the numpy backend can run")
    rng = np.random.default_rng(args.seed)

    print(f"{'vertices':>10}  {'numpy s':>9}  {'numba s':>9}  {'speedup':>7}  identical")
    for n in args.sizes:
        parent = random_preorder(rng, n)
        factor = rng.random(n)
        reset = rng.random(n) < 0.05
        np_sweep = Sweeper(parent, "numpy")
        t_np = best_of(lambda: np_sweep.products(factor, reset), args.repeats)
        if HAVE_NUMBA:
            nb_sweep = Sweeper(parent, "numba")
            nb_sweep.products(factor, reset)  # compile outside the timing
            t_nb = best_of(lambda: nb_sweep.products(factor, reset), args.repeats)
            same = np.array_equal(np_sweep.products(factor, reset), nb_sweep.products(factor, reset))
            print(f"{n:>10}  {t_np:>9.4f}  {t_nb:>9.4f}  {t_np / t_nb:>7.1f}  {same}")
        else:
            print(f"{n:>10}  {t_np:>9.4f}  {'-':>9}  {'-':>7}  -")

    print(f"\nunfolded {args.steps}-step dynamic score")
    x_np, t_np = end_to_end(args.steps, disable=True)
    print(f"  numpy  {t_np:.3f}s  delta {x_np!r}")
    if HAVE_NUMBA:
        x_nb, t_nb = end_to_end(args.steps, disable=False)
        print(f"  numba  {t_nb:.3f}s  delta {x_nb!r}  identical {x_nb == x_np}")


if __name__ == "__main__":
    main()
