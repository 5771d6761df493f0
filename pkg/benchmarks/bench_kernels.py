"""Time the numpy and numba versions of every hot kernel.

    python3 benchmarks/bench_kernels.py [--repeat N]

Both versions are called directly through ``_kernels.IMPLEMENTATIONS``,
so the environment flag does not matter here.  Numba is compiled once
before timing.
"""
import argparse
import timeit

import numpy as np

from beamfcs import _kernels
from beamfcs._kernels import IMPLEMENTATIONS


def cases(rng):
    n = 1500
    E = np.linspace(0.0, 40.0, n)
    yield "band_matrix", (E, np.full(n, np.sqrt(E[1] - E[0])), 0.0, 1.0), f"n={n}"

    w = np.full(n, E[1] - E[0])
    rho = 1.0 / (1.0 + (E - 20.0) ** 2)
    yield "pv_sum", (E, w, rho, -2 * (E - 20.0) * rho**2), f"n={n}"

    cells, k, m = 200, 40, 2000
    U, _ = np.linalg.qr(rng.standard_normal((cells, cells)) + 1j * rng.standard_normal((cells, cells)))
    args = (np.ascontiguousarray(U[:, :k]), rng.uniform(0.1, 1.0, k), rng.random((m, k)), rng.random((m, k)))
    yield "dpp_draws", args, f"{m} draws, {cells} cells, rank {k}"

    R = 20000
    lens = rng.poisson(8, R)
    offsets = np.concatenate([[0], np.cumsum(lens)]).astype(np.int64)
    times = np.concatenate([np.sort(rng.uniform(0, 1, c)) for c in lens])
    yield "next_gap_hist", (times, offsets, 0.5, np.linspace(0, 0.5, 11)), f"{R} trains"
    sel = np.ones(times.size, dtype=bool)
    yield "pair_lag_hist", (times, sel, sel, offsets, np.linspace(0, 0.5, 11)), f"{R} trains"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"numba available: {_kernels.HAVE_NUMBA}; library default backend: {_kernels.active_backend()}")
    print(f"{'kernel':<15}{'size':<34}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")
    for name, a, size in cases(rng):
        times = {}
        for impl in ("numpy", "numba"):
            fn = IMPLEMENTATIONS[name][impl]
            if impl == "numba" and not _kernels.HAVE_NUMBA:
                continue
            fn(*a)  # compile / warm caches
            times[impl] = min(timeit.repeat(lambda: fn(*a), number=1, repeat=args.repeat)) * 1e3
        nb = times.get("numba")
        speed = f"{times['numpy'] / nb:9.1f}x" if nb else "      n/a"
        nb_s = f"{nb:12.2f}" if nb else f"{'n/a':>12}"
        print(f"{name:<15}{size:<34}{times['numpy']:12.2f}{nb_s}{speed}")


if __name__ == "__main__":
    main()
