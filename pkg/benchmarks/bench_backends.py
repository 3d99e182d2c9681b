"""Time the numba and numpy kernels on the same inputs.

    python3 benchmarks/bench_backends.py [--repeat 3] [--json out.json]

Each row reports the best of ``--repeat`` runs after one warm-up call (which
absorbs numba compilation) and the largest relative difference between the
two backends.
"""
import argparse
import json
import time

import numpy as np

from heatpot.field import GridFunction, GridSpec
from heatpot.potential import heat_potential, maximal_M, maximal_Mhat


def random_grid(n, h, tau, seed=0):
    spec = GridSpec([-1.0] * n, [1.0] * n, 0.0, 1.0, h, tau)
    rng = np.random.default_rng(seed)
    return GridFunction(spec, rng.uniform(0, 1, spec.shape))


def cases():
    f1 = random_grid(1, 0.02, 0.01)
    f2 = random_grid(2, 0.1, 0.05)
    rng = np.random.default_rng(1)
    pts = np.concatenate([rng.uniform(-1, 1, (200, 1)), rng.uniform(0.1, 1.5, (200, 1))], axis=1)
    return [
        ("potential lattice n=1", lambda b: heat_potential(f1, 2.0, f1.spec, backend=b).samples),
        ("potential lattice n=2", lambda b: heat_potential(f2, 1.5, f2.spec, backend=b).samples),
        ("potential points n=1", lambda b: heat_potential(f1, 2.0, pts, backend=b)),
        ("maximal E n=1", lambda b: maximal_M(f1, f1.spec, backend=b).samples),
        ("maximal Q n=1", lambda b: maximal_Mhat(f1, f1.spec, backend=b).samples),
    ]


def best_time(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", help="also write the rows to this file")
    args = ap.parse_args(argv)
    rows = []
    print(f"{'case':<24}{'numba s':>10}{'numpy s':>10}{'speedup':>9}{'max rel diff':>14}")
    for name, fn in cases():
        ta, a = best_time(lambda: fn("numba"), args.repeat)
        tb, b = best_time(lambda: fn("numpy"), args.repeat)
        diff = float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)))
        rows.append({"case": name, "numba": ta, "numpy": tb, "speedup": tb / ta, "max_rel_diff": diff})
        print(f"{name:<24}{ta:>10.4f}{tb:>10.4f}{tb / ta:>9.1f}{diff:>14.1e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
