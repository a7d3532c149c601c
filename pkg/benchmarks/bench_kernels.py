"""Compare the numba kernels with their numpy fallbacks, and time a full
forward solve under each backend.

Run: python3 benchmarks/bench_kernels.py [--repeat 200]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from deepquench import _kernels as K


def best_of(fn, args, repeat):
    fn(*args)  # warm-up (and JIT compile)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_cases(n1, n2):
    rng = np.random.default_rng(0)
    r = rng.uniform(-0.99, 0.99, n1)
    f1 = rng.standard_normal(n1)
    f2 = rng.standard_normal((n2, n2))
    diag = 4.0 + rng.uniform(size=n1)
    off = -np.ones(n1 - 1)
    return {
        "laplacian_1d": ((f1, 1.0 / (n1 - 1)), K.laplacian_1d_py, K.laplacian_1d_nb),
        "laplacian_2d": ((f2, 1.0 / (n2 - 1), 1.0 / (n2 - 1)), K.laplacian_2d_py, K.laplacian_2d_nb),
        "log_first": ((r, 0.1), K.log_first_py, K.log_first_nb),
        "log_second": ((r, 0.1), K.log_second_py, K.log_second_nb),
        "tridiag_solve": ((diag, off, f1), K.tridiag_solve_py, K.tridiag_solve_nb),
    }


SOLVE_SNIPPET = """
import time
from deepquench.config import load_config
run = load_config({cfg!r})
p = run.problem
p.solve(run.control.values)
t0 = time.perf_counter()
for _ in range({reps}):
    p.solve(run.control.values)
print((time.perf_counter() - t0) / {reps})
"""


def time_solve(cfg, backend, reps):
    env = dict(os.environ, DEEPQUENCH_NUMBA="1" if backend == "numba" else "0")
    out = subprocess.run([sys.executable, "-c", SOLVE_SNIPPET.format(cfg=cfg, reps=reps)],
                         env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--n1", type=int, default=129, help="1D node count")
    ap.add_argument("--n2", type=int, default=64, help="2D nodes per axis")
    ap.add_argument("--solves", type=int, default=3)
    args = ap.parse_args()

    if not K.HAS_NUMBA:
        print("numba not importable; nothing to compare")
        return 0
    print(f"{'kernel':<16}{'numpy [us]':>12}{'numba [us]':>12}{'speedup':>10}{'max diff':>12}")
    for name, (a, py, nb) in kernel_cases(args.n1, args.n2).items():
        diff = float(np.max(np.abs(py(*a) - nb(*a))))
        t_py = best_of(py, a, args.repeat) * 1e6
        t_nb = best_of(nb, a, args.repeat) * 1e6
        print(f"{name:<16}{t_py:>12.2f}{t_nb:>12.2f}{t_py / t_nb:>10.2f}{diff:>12.2e}")

    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    for cfg in ("tracking.json", "smoke_2d.json"):
        path = os.path.join(root, "configs", cfg)
        t_py = time_solve(path, "numpy", args.solves)
        t_nb = time_solve(path, "numba", args.solves)
        print(f"forward solve {cfg:<18} numpy {t_py * 1e3:8.1f} ms   numba {t_nb * 1e3:8.1f} ms")
    return 0


if __name__ == "__main__":
    sys.exit(main())
