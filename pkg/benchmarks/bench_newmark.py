"""Time the compiled and numpy Newmark modal kernels on a beam-sized problem.

Usage: python benchmarks/bench_newmark.py [--modes 20] [--seconds 30] [--substeps 64]
"""
import argparse
import timeit

import numpy as np

from beamoma import _newmark_py

try:
    from beamoma import _newmark_ext
except ImportError:
    _newmark_ext = None


def problem(n_modes, seconds, sample_rate=2048.0, seed=0):
    rng = np.random.default_rng(seed)
    f = np.geomspace(8.0, 0.45 * sample_rate, n_modes)
    omega2 = (2 * np.pi * f) ** 2
    damping = 2 * 0.01 * np.sqrt(omega2)
    forces = rng.standard_normal((int(seconds * sample_rate), n_modes))
    zeros = np.zeros(n_modes)
    return omega2, damping, forces, 1.0 / sample_rate, zeros, zeros


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--modes", type=int, default=20)
    parser.add_argument("--seconds", type=float, default=30.0)
    parser.add_argument("--substeps", type=int, default=64)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    omega2, damping, forces, dt, q0, v0 = problem(args.modes, args.seconds)
    kernels = {"python": _newmark_py.newmark_modal}
    if _newmark_ext is not None:
        kernels["cython"] = _newmark_ext.newmark_modal
    else:
        print("compiled extension not built; timing the numpy kernel only")

    print(f"{args.modes} modes, {forces.shape[0]} samples, {args.substeps} substeps per sample")
    results = {}
    for name, fn in kernels.items():
        times = timeit.repeat(lambda: fn(omega2, damping, forces, dt, args.substeps, q0, v0),
                              number=1, repeat=args.repeat)
        results[name] = fn(omega2, damping, forces, dt, args.substeps, q0, v0)
        steps = forces.shape[0] * args.substeps * args.modes
        print(f"{name:>7}: best {min(times):.3f} s  ({steps / min(times) / 1e6:.1f} M modal steps/s)")
    if len(results) == 2:
        a, b = (np.asarray(r[2]) for r in results.values())
        print(f"max |acceleration difference| / max |acceleration|: {np.abs(a - b).max() / np.abs(b).max():.2e}")


if __name__ == "__main__":
    main()
