"""Compare the compiled and pure-Python kernel backends on simulator-sized inputs.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from otatti import _kernels_py

try:
    from otatti import _kernels_c
except ImportError:  # extension not built
    _kernels_c = None


def cases(rng: np.random.Generator):
    flat = rng.normal(size=4522)
    big = rng.normal(size=200_000)
    layer = rng.normal(size=2048)
    six = rng.normal(size=(6, 2048))
    feats = rng.normal(size=(40, 9))
    dist40 = _kernels_py.pairwise_distances(feats)
    return [
        ("top_energy_fraction S=4522", "top_energy_fraction", (flat, 46)),
        ("top_energy_fraction S=200000", "top_energy_fraction", (big, 2000)),
        ("pairwise_distances 6x2048", "pairwise_distances", (six,)),
        ("shape_moments n=2048", "shape_moments", (layer,)),
        ("average_linkage_two n=40", "average_linkage_two", (dist40,)),
    ]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=200)
    args = parser.parse_args()
    backends = [("python", _kernels_py)] + ([("cython", _kernels_c)] if _kernels_c else [])
    rng = np.random.default_rng(0)
    print(f"{'kernel':32s}" + "".join(f"{name:>14s}" for name, _ in backends) + "   speedup")
    for label, fn, fargs in cases(rng):
        times = []
        for _, mod in backends:
            f = getattr(mod, fn)
            times.append(min(timeit.repeat(lambda: f(*fargs), number=args.repeat, repeat=3)) / args.repeat)
        speed = f"{times[0] / times[1]:8.1f}x" if len(times) == 2 else "      n/a"
        print(f"{label:32s}" + "".join(f"{t * 1e6:12.1f}us" for t in times) + "  " + speed)


if __name__ == "__main__":
    main()
