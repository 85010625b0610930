"""Compare the compiled action kernels with the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--n 512] [--rows 65] [--repeat 20]

Times one batched action + gradient evaluation (the inner loop of path
deformation) and one Hessian-band assembly (the Newton refinement step),
and reports the largest difference between the two backends.
"""

import argparse
import time

import numpy as np

from frozen_planet import _backend
from frozen_planet.action import ActionContext
from frozen_planet.potentials import SmoothedPotentials, helium


def sample_batch(n: int, rows: int, seed: int):
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 1.0, n + 1)
    Q1 = np.sin(0.5 * np.pi * t)[None, :] * rng.uniform(0.8, 1.2, (rows, 1))
    Q1[:, 0] = 0.0
    Q2 = 2.0 + 0.1 * rng.standard_normal((rows, 1)) - 0.3 * t[None, :] ** 2
    return Q1, Q2


def best_time(fn, repeat: int) -> float:
    fn()
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=512)
    p.add_argument("--rows", type=int, default=65)
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    if not _backend.compiled_available():
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
    ctx = ActionContext(SmoothedPotentials(helium(), 1e-3, 1e-3), 1.0, 1.0, args.n)
    Q1, Q2 = sample_batch(args.n, args.rows, args.seed)
    pinned = np.ones(args.rows, dtype=bool)

    results = {}
    for which in ("python", "compiled"):
        _backend.set_backend(which)
        batch = lambda: _backend.action_batch(ctx.sp, ctx.mu, ctx.dt, Q1, Q2, pinned)
        hess = lambda: _backend.hessian_diagonals(ctx.sp, ctx.mu, ctx.dt, Q1[0], Q2[0])
        results[which] = (best_time(batch, args.repeat), best_time(hess, args.repeat),
                          batch(), hess())
    _backend.set_backend("compiled")

    (tp_b, tp_h, rp, hp), (tc_b, tc_h, rc, hc) = results["python"], results["compiled"]
    diff_b = max(float(np.max(np.abs(a - b))) for a, b in zip(rp, rc))
    diff_h = max(float(np.max(np.abs(np.asarray(a) - np.asarray(b)))) for a, b in zip(hp, hc))
    print(f"n={args.n} rows={args.rows} repeat={args.repeat}")
    print(f"{'kernel':20s} {'python [ms]':>12s} {'compiled [ms]':>14s} {'speedup':>8s} {'max diff':>10s}")
    print(f"{'action_batch':20s} {1e3 * tp_b:12.3f} {1e3 * tc_b:14.3f} {tp_b / tc_b:8.2f} {diff_b:10.2e}")
    print(f"{'hessian_diagonals':20s} {1e3 * tp_h:12.3f} {1e3 * tc_h:14.3f} {tp_h / tc_h:8.2f} {diff_h:10.2e}")


if __name__ == "__main__":
    main()
