"""Compare the numba and numpy backends of the characteristic solvers.

The backend is frozen when spinoc._kernels is imported (SPINOC_BACKEND
environment variable), so this script re-runs itself in a subprocess per
backend and reports both timings plus the speedup.

    python benchmarks/bench_backends.py [--intervals N] [--repeats R]
"""

import argparse
import os
import subprocess
import sys
import time


def run_case(n_intervals: int, repeats: int) -> float:
    """Time forward + adjoint solves; returns the best wall time in s."""
    import numpy as np

    from spinoc.classical import (ClassicalState, ControlSignal, OCConfig,
                                  integrate_adjoint, integrate_forward)
    from spinoc.fields import FieldSet, ScalarShape, VectorShape

    fields = FieldSet(
        u0=ScalarShape("gaussian", amplitude=0.8, center=(0.3, 0.0, 0.0),
                       width=1.6),
        control_basis=(
            ScalarShape("linear", slope=(1.0, 0.0, 0.0)),
            ScalarShape("gaussian", amplitude=1.0, center=(-0.5, 0.0, 0.0),
                        width=2.0),
        ),
        magnetic=VectorShape("gaussian", value_vec=(0.3, -0.2, 0.4),
                             center=(0.2, 0.0, 0.0), width=2.2),
        rashba=VectorShape("uniform", value_vec=(0.0, 0.4, 0.2)),
    )
    config = OCConfig(horizon=2.0, n_intervals=n_intervals, gamma=0.5,
                      gamma_prime=0.05, nu_x=1.0, nu_p=0.5, nu_d=0.5,
                      x_target=(0.8, 0.0, 0.0), d_target=(0.0, 0.0, 1.0))
    state = ClassicalState(x=(-0.5, 0.1, 0.0), p=(0.3, 0.0, -0.1),
                           d=(0.0, 0.6, 0.8))
    times = np.linspace(0.0, config.horizon, n_intervals + 1)
    u = ControlSignal(times, np.column_stack([0.3 * np.sin(2.0 * times),
                                              0.2 * np.cos(3.0 * times)]))

    def solve():
        traj = integrate_forward(state, u, fields, config)
        integrate_adjoint(traj)

    solve()  # warm up (includes JIT compilation on the numba backend)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        solve()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--intervals", type=int, default=4000)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--single", choices=("numba", "numpy"),
                        help=argparse.SUPPRESS)
    args = parser.parse_args()

    if args.single:
        from spinoc import _kernels
        if _kernels.BACKEND != args.single:
            print(f"requested {args.single} but got {_kernels.BACKEND}",
                  file=sys.stderr)
            return 1
        print(f"{run_case(args.intervals, args.repeats):.6f}")
        return 0

    timings = {}
    for backend in ("numpy", "numba"):
        env = dict(os.environ, SPINOC_BACKEND=backend)
        out = subprocess.run(
            [sys.executable, __file__, "--single", backend,
             "--intervals", str(args.intervals),
             "--repeats", str(args.repeats)],
            env=env, capture_output=True, text=True, check=True)
        timings[backend] = float(out.stdout.strip().splitlines()[-1])
        print(f"{backend:>6}: {timings[backend] * 1e3:9.2f} ms per "
              f"forward+adjoint solve ({args.intervals} intervals)")
    print(f"speedup (numpy / numba): "
          f"{timings['numpy'] / timings['numba']:.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
