"""Time the numba and numpy kernel backends on the shipped office world.

    python benchmarks/bench_kernels.py [--repeat N]

Both backends are imported from the same module (``*_nb`` / ``*_np``), so the
comparison does not depend on SEEK_JIT.  The first numba call includes
compilation and is reported separately.
"""
import argparse
import time
import timeit

import numpy as np

from seeknav import DATA_DIR, _jit, kernels
from seeknav.world_sim import load_world


def best_of(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    world = load_world(DATA_DIR / "office_fire_extinguisher_world.json")
    free = world.free
    rng = np.random.default_rng(0)
    cells = np.argwhere(free)
    pairs = cells[rng.choice(len(cells), size=(200, 2))]
    src = tuple(int(v) for v in world.snap((10.0, 10.5)))
    adjacency = kernels.grid_adjacency(free)

    n = 21
    M = rng.uniform(1, 100, (n, n))
    M = np.triu(M, 1) + np.triu(M, 1).T
    vi_args = (M, rng.uniform(1, 100, n), rng.uniform(1e-3, 0.2, n), rng.uniform(1e-3, 0.9, n), 1e-9, 10**6)

    def los_np():
        for (a, b) in pairs:
            kernels.los_clear_np(free, a[0], a[1], b[0], b[1])

    def los_nb():
        for (a, b) in pairs:
            kernels.los_clear_nb(free, a[0], a[1], b[0], b[1])

    cases = [
        ("grid dijkstra (full field)",
         lambda: kernels.grid_dijkstra_np(free, *src, adjacency=adjacency),
         lambda: kernels.grid_dijkstra_nb(free, src[0], src[1], -1, -1), 1),
        ("line of sight x200", los_np, los_nb, 5),
        ("value iteration, 21 rooms",
         lambda: kernels.value_iteration_np(*vi_args),
         lambda: kernels.value_iteration_nb(*vi_args), 5),
    ]

    print(f"grid {free.shape[0]}x{free.shape[1]} ({int(free.sum())} free cells); numba available: {_jit.HAVE_NUMBA}")
    print(f"{'kernel':30s} {'numpy':>12s} {'numba':>12s} {'speedup':>8s} {'numba 1st call':>15s}")
    for name, f_np, f_nb, number in cases:
        t_np = best_of(f_np, args.repeat, number)
        if _jit.HAVE_NUMBA:
            t0 = time.perf_counter()
            f_nb()
            first = time.perf_counter() - t0
            t_nb = best_of(f_nb, args.repeat, number)
            print(f"{name:30s} {t_np * 1e3:10.2f}ms {t_nb * 1e3:10.2f}ms {t_np / t_nb:7.1f}x {first * 1e3:13.1f}ms")
        else:
            print(f"{name:30s} {t_np * 1e3:10.2f}ms {'-':>12s}")


if __name__ == "__main__":
    main()
