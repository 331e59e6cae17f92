"""Time the compiled transition kernels against the NumPy fallback.

    python3 benchmarks/bench_kernels.py [--sizes 1024 4096] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from gsdmix import _kernels_py

try:
    from gsdmix import _kernels as _compiled
except ImportError:
    _compiled = None


def _inputs(size, seed=0):
    rng = np.random.default_rng(seed)
    nodes = np.sort(rng.uniform(-8, 3, size))
    wv = rng.uniform(0, 1e-3, size)
    out_nodes = np.linspace(-9, 4, size)
    xs = np.linspace(-4, 4, 64)
    return out_nodes, nodes, wv, xs


def bench(size, repeat):
    out_nodes, nodes, wv, xs = _inputs(size)
    args = (0.7, 0.4, 0.71)
    rows = []
    backends = [("python", _kernels_py)] + ([("cython", _compiled)] if _compiled else [])
    for name, mod in backends:
        t_prop = min(timeit.repeat(lambda: mod.propagate(out_nodes, nodes, wv, *args), number=1, repeat=repeat))
        t_cdf = min(timeit.repeat(lambda: mod.cdf_mass(nodes, wv, *args, xs, True), number=1, repeat=repeat))
        rows.append((name, t_prop, t_cdf))
    if _compiled:
        diff = np.max(np.abs(_compiled.propagate(out_nodes, nodes, wv, *args) - _kernels_py.propagate(out_nodes, nodes, wv, *args)))
    else:
        diff = float("nan")
    return rows, diff


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[1024, 4096])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()
    if _compiled is None:
        print("compiled extension not built; timing the fallback only")
    print(f"{'nodes':>6} {'backend':>8} {'propagate_ms':>13} {'cdf_mass_ms':>12} {'speedup':>8}")
    for size in args.sizes:
        rows, diff = bench(size, args.repeat)
        base = rows[0][1]
        for name, tp, tc in rows:
            print(f"{size:>6} {name:>8} {tp * 1e3:>13.2f} {tc * 1e3:>12.2f} {base / tp:>7.1f}x")
        print(f"{'':>6} max |cython - python| = {diff:.1e}")


if __name__ == "__main__":
    main()
