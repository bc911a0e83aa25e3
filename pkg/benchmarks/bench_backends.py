"""Time the compiled kernels against the pure-numpy reference path.

Runs every kernel-backed estimator on one ridge problem under both
backends, checks the trajectories agree, and prints per-iteration times.

    python3 benchmarks/bench_backends.py
    python3 benchmarks/bench_backends.py --n 200 --d 50 --iters 20000
"""

import argparse
import time

import numpy as np

from proxsgd._kernels import HAS_NUMBA
from proxsgd.driver import RunConfig, run
from proxsgd.estimators import LSVRG, SAGA, SEGA, SGD, SGDInd, SGDMB, \
    SGDStar, NSEGA
from proxsgd.problems import NoisyOracle, make_least_squares
from proxsgd.reference import solve_reference
from proxsgd.sampling import inclusion_probs, uniform_dist


def build(n, d, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, d))
    b = rng.standard_normal(n)
    problem = make_least_squares(A, b, lam=1.0)
    return problem, solve_reference(problem)


def estimators(problem, ref):
    n = problem.n
    dist = uniform_dist(n)
    return [
        ("sgd", lambda: SGD(problem, dist)),
        ("sgd_star", lambda: SGDStar(problem, dist, ref.star_grads)),
        ("sgd_mb", lambda: SGDMB(problem, dist, tau=8)),
        ("sgd_ind", lambda: SGDInd(problem, inclusion_probs(dist.p, 8))),
        ("saga", lambda: SAGA(problem)),
        ("l_svrg", lambda: LSVRG(problem, p=0.05)),
        ("sega", lambda: SEGA(problem)),
        ("n_sega", lambda: NSEGA(NoisyOracle(problem, 0.01,
                                             mode="partial"))),
    ]


def time_run(problem, build_est, cfg):
    t0 = time.perf_counter()
    trace = run(problem, build_est(), cfg)
    return time.perf_counter() - t0, trace


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--d", type=int, default=50)
    ap.add_argument("--iters", type=int, default=10_000)
    ap.add_argument("--gamma", type=float, default=1e-3)
    args = ap.parse_args()

    if not HAS_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    problem, ref = build(args.n, args.d, seed=0)
    cfg_np = RunConfig(args.gamma, args.iters, seed=1, record_every=args.iters,
                       backend="numpy")
    cfg_nb = RunConfig(args.gamma, args.iters, seed=1, record_every=args.iters,
                       backend="numba")
    warm = RunConfig(args.gamma, 5, seed=1, backend="numba")

    print(f"problem: ridge n={args.n} d={args.d}, {args.iters} iterations, "
          f"gamma={args.gamma:g}")
    header = (f"{'method':10s} {'numpy us/it':>12s} {'numba us/it':>12s} "
              f"{'speedup':>8s} {'max |dx|':>10s}")
    print(header)
    print("-" * len(header))
    for name, build_est in estimators(problem, ref):
        run(problem, build_est(), warm)  # trigger JIT outside the clock
        t_np, tr_np = time_run(problem, build_est, cfg_np)
        t_nb, tr_nb = time_run(problem, build_est, cfg_nb)
        gap = float(np.max(np.abs(tr_np.x_final - tr_nb.x_final)))
        print(f"{name:10s} {1e6 * t_np / args.iters:12.2f} "
              f"{1e6 * t_nb / args.iters:12.2f} {t_np / t_nb:8.1f} "
              f"{gap:10.1e}")


if __name__ == "__main__":
    main()
