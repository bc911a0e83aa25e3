"""Proximal stochastic-gradient loop: x <- prox_{gamma R}(x - gamma g).

One driver runs every estimator. The per-step python path is the reference
implementation; for the serial-sampling estimators on the built-in objectives
a compiled kernel path (``_kernels``) runs the same loop on pre-drawn random
sequences, consuming each stream in exactly the order the python loop would.
Backend selection: the ``PROXSGD_BACKEND`` environment variable (``auto`` |
``numba`` | ``numpy``, default ``auto``), overridable per run through
``RunConfig.backend``.

Traces record the squared distance to the reference solution, the raw and
normalized objective gaps, the estimator's state variance, and the Lyapunov
value ``dist_sq + M * gamma^2 * sigma_sq`` on a fixed iteration grid
(iteration 0 and the final iteration always included). Diagnostics need a
reference solution; without one only the iterate grid is kept.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels, theory
from .problems import _softplus
from .rng import Streams

DIVERGENCE_NORM = 1e12

_KERNEL_METHODS = ("sgd", "sgd_star", "sgd_mb", "sgd_ind", "saga",
                   "l_svrg", "sega", "n_sega")
_REG_CODES = {"zero": 0, "l2": 1, "ball": 2}


class NumericalError(RuntimeError):
    """A gradient estimate or iterate went non-finite."""


class DivergenceError(RuntimeError):
    """The iterate norm passed the divergence guard."""


@dataclass(frozen=True)
class RunConfig:
    """Settings for one trajectory.

    Parameters
    ----------
    gamma : float
        Stepsize, > 0.
    iters : int
        Number of proximal steps, >= 1.
    seed : int
        Root seed for the run's random streams.
    x0 : ndarray, optional
        Start point; defaults to the origin.
    record_every : int, optional
        Recording stride; defaults to ``max(1, iters // 1000)``.
    weight : float, optional
        Lyapunov weight M; defaults to the estimator's canonical weight.
    backend : {"auto", "numba", "numpy"}, optional
        Overrides the PROXSGD_BACKEND environment variable.
    """

    gamma: float
    iters: int
    seed: int = 0
    x0: np.ndarray | None = None
    record_every: int | None = None
    weight: float | None = None
    backend: str | None = None

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if self.record_every is not None and self.record_every < 1:
            raise ValueError("record_every must be >= 1")


@dataclass(frozen=True)
class Trace:
    """One recorded trajectory. Diagnostic arrays are None when the run had
    no reference solution."""

    method: str
    seed: int
    gamma: float
    weight: float
    backend: str
    iters: np.ndarray
    x_final: np.ndarray
    dist_sq: np.ndarray | None = None
    f_gap: np.ndarray | None = None
    rel_subopt: np.ndarray | None = None
    sigma_sq: np.ndarray | None = None
    lyapunov: np.ndarray | None = None


def record_grid(iters: int, record_every=None) -> np.ndarray:
    stride = record_every if record_every is not None \
        else max(1, iters // 1000)
    grid = np.arange(0, iters + 1, stride, dtype=np.int64)
    if grid[-1] != iters:
        grid = np.append(grid, np.int64(iters))
    return grid


def resolve_backend(est, problem, override=None) -> str:
    """Pick the execution backend for (estimator, problem)."""
    mode = override if override is not None \
        else os.environ.get("PROXSGD_BACKEND", "auto")
    if mode not in ("auto", "numba", "numpy"):
        raise ValueError(f"unknown backend {mode!r}")
    supported = est.method_id in _KERNEL_METHODS
    if mode == "numpy":
        return "numpy"
    if mode == "numba":
        if not _kernels.HAS_NUMBA:
            raise RuntimeError("backend 'numba' requested but numba is not "
                               "installed")
        if not supported:
            raise ValueError(f"no compiled kernel for method "
                             f"{est.method_id!r}")
        return "numba"
    return "numba" if (_kernels.HAS_NUMBA and supported) else "numpy"


def _objective_values(problem, X):
    """Smooth-part objective at each row of X. The gap column tracks the
    smooth sum only; with a nonsmooth regularizer it can go (slightly)
    negative at feasible points, and is recorded as-is."""
    Z = X @ problem.A.T
    if problem.kind == "least_squares":
        loss = 0.5 * np.mean((Z - problem.b) ** 2, axis=1)
    else:
        loss = np.mean(_softplus(problem.b * Z), axis=1)
    return loss + 0.5 * problem.lam * np.einsum("ij,ij->i", X, X)


def _resolve_weight(est, ref, config):
    if config.weight is not None:
        return float(config.weight)
    return theory.default_weight(est.param_set(ref))


def _finish(problem, est, ref, config, grid, X, sig, x_final, backend):
    if ref is None:
        return Trace(method=est.method_id, seed=config.seed,
                     gamma=config.gamma, weight=np.nan, backend=backend,
                     iters=grid, x_final=x_final)
    weight = _resolve_weight(est, ref, config)
    diff = X - ref.x_star
    dist_sq = np.einsum("ij,ij->i", diff, diff)
    f_gap = _objective_values(problem, X) - ref.f_star
    gap0 = f_gap[0]
    rel = f_gap / gap0 if gap0 > 0 else np.full_like(f_gap, np.nan)
    # No finite Lyapunov weight exists for epoch-anchored estimators
    # (state_decay 0 with positive state_weight); the column is omitted
    # so every recorded value stays finite.
    lyap = dist_sq + weight * config.gamma ** 2 * sig \
        if np.isfinite(weight) else None
    return Trace(method=est.method_id, seed=config.seed, gamma=config.gamma,
                 weight=weight, backend=backend, iters=grid, x_final=x_final,
                 dist_sq=dist_sq, f_gap=f_gap, rel_subopt=rel, sigma_sq=sig,
                 lyapunov=lyap)


def _run_python(problem, est, config, grid, ref):
    gamma = config.gamma
    streams = Streams(config.seed)
    x = np.array(config.x0 if config.x0 is not None
                 else np.zeros(problem.d), dtype=np.float64)
    if hasattr(est, "_ensure_table"):
        est._ensure_table(streams)
    R = grid.shape[0]
    X = np.zeros((R, problem.d))
    sig = np.full(R, np.nan)
    ptr = 0
    X[0] = x
    if ref is not None:
        sig[0] = est.sigma_sq(ref)
    ptr = 1
    for k in range(1, config.iters + 1):
        g = est.next(x, streams)
        if not np.all(np.isfinite(g)):
            raise NumericalError(
                f"non-finite gradient estimate at step {k} "
                f"(||g|| = {float(np.linalg.norm(g))})")
        x = problem.regularizer.prox(gamma, x - gamma * g)
        x = est.post_step(x)
        nrm = float(np.linalg.norm(x))
        if not np.isfinite(nrm):
            raise NumericalError(f"non-finite iterate at step {k}")
        if nrm > DIVERGENCE_NORM:
            raise DivergenceError(
                f"iterate norm {nrm:.3e} exceeded {DIVERGENCE_NORM:.0e} "
                f"at step {k}")
        if ptr < R and grid[ptr] == k:
            X[ptr] = x
            if ref is not None:
                sig[ptr] = est.sigma_sq(ref)
            ptr += 1
    return X, sig, x


def _run_kernel(problem, est, config, grid, ref):
    gamma = config.gamma
    iters = config.iters
    streams = Streams(config.seed)
    x0 = np.array(config.x0 if config.x0 is not None
                  else np.zeros(problem.d), dtype=np.float64)
    kind = 0 if problem.kind == "least_squares" else 1
    reg = problem.regularizer
    reg_args = (_REG_CODES[reg.kind], reg.lam, reg.radius)
    common = (kind, problem.A, problem.b, problem.lam) + reg_args + (gamma,
                                                                     grid)
    has_star = ref is not None
    mid = est.method_id

    if mid == "sgd":
        u = streams.index.random(iters)
        x, X, status, gsq = _kernels.k_sgd(*common, x0, u, est.dist.cum,
                                           est.scale)
        sig = np.zeros(grid.shape[0]) if has_star else np.full(
            grid.shape[0], np.nan)
    elif mid == "sgd_star":
        u = streams.index.random(iters)
        x, X, status, gsq = _kernels.k_sgd_star(
            *common, x0, u, est.dist.cum, est.scale, est.star_grads,
            est.grad_star)
        sig = np.zeros(grid.shape[0]) if has_star else np.full(
            grid.shape[0], np.nan)
    elif mid == "sgd_mb":
        U = streams.index.random((iters, est.tau))
        x, X, status, gsq = _kernels.k_sgd_mb(*common, x0, U, est.dist.cum,
                                              est.scale)
        sig = np.zeros(grid.shape[0]) if has_star else np.full(
            grid.shape[0], np.nan)
    elif mid == "sgd_ind":
        U = streams.index.random((iters, problem.n))
        x, X, status, gsq = _kernels.k_sgd_ind(*common, x0, U, est.q)
        sig = np.zeros(grid.shape[0]) if has_star else np.full(
            grid.shape[0], np.nan)
    elif mid == "saga":
        u = streams.index.random(iters)
        star = ref.star_grads if has_star else np.zeros_like(est.table)
        x, X, sig, table, avg, steps, status, gsq = _kernels.k_saga(
            *common, x0, u, est.table, est.avg, est.steps, star, has_star)
        est.table, est.avg, est.steps = table, avg, int(steps)
    elif mid == "l_svrg":
        u = streams.index.random(iters)
        cu = streams.coin.random(iters)
        star = ref.star_grads if has_star else np.zeros((problem.n,
                                                         problem.d))
        x, X, sig, anchor, full_grad, status, gsq = _kernels.k_lsvrg(
            *common, x0, u, cu, est.p, est.anchor, est.full_grad, star,
            has_star)
        est.anchor, est.full_grad = anchor, full_grad
    elif mid in ("sega", "n_sega"):
        u = streams.index.random(iters)
        if mid == "n_sega" and est.oracle.sigma_sq > 0:
            noise = streams.noise.standard_normal(iters)
            noise_scale = float(est.oracle._scale_partial)
            has_noise = True
        else:
            noise = np.zeros(iters)
            noise_scale = 0.0
            has_noise = False
        gstar = ref.grad_star if has_star else np.zeros(problem.d)
        x, X, sig, h, status, gsq = _kernels.k_sega(
            *common, x0, u, est.h, gstar, has_star, noise, noise_scale,
            has_noise)
        est.h = h
    else:  # pragma: no cover - resolve_backend prevents this
        raise ValueError(f"no compiled kernel for method {mid!r}")

    if status != 0:
        step = int(status)
        if not np.all(np.isfinite(x)):
            raise NumericalError(f"non-finite iterate at step {step} "
                                 f"(||g||^2 = {float(gsq)})")
        raise DivergenceError(
            f"iterate norm {float(np.linalg.norm(x)):.3e} exceeded "
            f"{DIVERGENCE_NORM:.0e} at step {step}")
    if not has_star:
        sig = np.full(grid.shape[0], np.nan)
    return X, sig, x


def run(problem, est, config: RunConfig, ref=None) -> Trace:
    """Run one trajectory of the estimator under the config.

    The estimator is (re)started at the config's start point; its state
    after the call is the state at the final iterate.
    """
    if config.x0 is not None and np.shape(config.x0) != (problem.d,):
        raise ValueError(f"x0 must have shape ({problem.d},)")
    grid = record_grid(config.iters, config.record_every)
    backend = resolve_backend(est, problem, config.backend)
    x0 = np.array(config.x0 if config.x0 is not None
                  else np.zeros(problem.d), dtype=np.float64)
    est.start(x0)
    if backend == "numba":
        X, sig, x_final = _run_kernel(problem, est, config, grid, ref)
    else:
        X, sig, x_final = _run_python(problem, est, config, grid, ref)
    return _finish(problem, est, ref, config, grid, X, sig, x_final,
                   backend)


@dataclass(frozen=True)
class EnsembleTrace:
    """Per-seed diagnostic matrices (seeds, grid) plus their summaries."""

    method: str
    seeds: tuple
    gamma: float
    weight: float
    iters: np.ndarray
    x_final: np.ndarray
    dist_sq: np.ndarray | None = None
    f_gap: np.ndarray | None = None
    rel_subopt: np.ndarray | None = None
    sigma_sq: np.ndarray | None = None
    lyapunov: np.ndarray | None = None

    def mean(self, field: str) -> np.ndarray:
        return getattr(self, field).mean(axis=0)

    def stderr(self, field: str) -> np.ndarray:
        mat = getattr(self, field)
        return mat.std(axis=0, ddof=1) / np.sqrt(mat.shape[0])


def ensemble(problem, est_factory, config: RunConfig, seeds,
             ref=None) -> EnsembleTrace:
    """Independent runs from fresh estimators over distinct seeds."""
    seeds = tuple(int(s) for s in seeds)
    if len(seeds) < 2 or len(set(seeds)) != len(seeds):
        raise ValueError("ensemble needs at least two distinct seeds")
    traces = []
    for seed in seeds:
        cfg = replace(config, seed=seed)
        traces.append(run(problem, est_factory(), cfg, ref=ref))
    grid = traces[0].iters
    for t in traces[1:]:
        if not np.array_equal(t.iters, grid):
            raise RuntimeError("ensemble runs recorded on mismatched grids")
    fields = {}
    if ref is not None:
        for name in ("dist_sq", "f_gap", "rel_subopt", "sigma_sq",
                     "lyapunov"):
            cols = [getattr(t, name) for t in traces]
            fields[name] = np.stack(cols) if cols[0] is not None else None
    return EnsembleTrace(method=traces[0].method, seeds=seeds,
                         gamma=config.gamma, weight=traces[0].weight,
                         iters=grid,
                         x_final=np.stack([t.x_final for t in traces]),
                         **fields)
