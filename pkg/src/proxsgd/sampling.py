"""Index distributions and the samplings feeding the gradient estimators.

A fixed inverse-CDF convention makes every sampler exactly reproducible: a
uniform u in [0,1) selects the smallest index i whose cumulative probability
exceeds u. Draws cost O(log n) each via searchsorted on the cumulative array.
"""

from __future__ import annotations

import numpy as np

from .problems import Problem


class IndexDistribution:
    """Discrete distribution over component indices 0..n-1.

    Parameters
    ----------
    p : array_like (n,)
        Probabilities; all strictly positive, summing to 1 within 1e-12.
    delta : float, optional
        Shift parameter recorded by importance_probs (diagnostic only).
    used_fallback : bool
        True when the importance construction could not bracket a root and
        fell back to delta=0 with renormalization.
    """

    def __init__(self, p, delta=None, used_fallback=False):
        p = np.asarray(p, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("p must be a nonempty 1-d array")
        if np.any(p <= 0):
            raise ValueError("all probabilities must be > 0")
        if abs(float(p.sum()) - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        self.p = p
        self.n = p.size
        self.cum = np.cumsum(p)
        self.delta = delta
        self.used_fallback = used_fallback

    def sample(self, rng) -> int:
        """One draw: smallest i with cumulative(i) > u, u ~ U[0,1)."""
        u = rng.random()
        i = int(np.searchsorted(self.cum, u, side="right"))
        return self.n - 1 if i >= self.n else i

    def __repr__(self):
        return f"IndexDistribution(n={self.n})"


def uniform_dist(n: int) -> IndexDistribution:
    return IndexDistribution(np.full(n, 1.0 / n))


def draw_with_replacement(dist: IndexDistribution, tau: int, rng) -> np.ndarray:
    """tau independent draws from dist, O(tau log n) total."""
    if tau < 1:
        raise ValueError("tau must be >= 1")
    u = rng.random(tau)
    idx = np.searchsorted(dist.cum, u, side="right")
    return np.minimum(idx, dist.n - 1).astype(np.int64)


def _solve_delta(v: np.ndarray):
    """Root of sum_i v_i/(delta+v_i) = 1 over delta >= 0, by bisection on
    the (strictly decreasing) left-hand side. Returns None when the sum is
    already below 1 at delta=0, i.e. no root exists."""

    def g(delta):
        return float(np.sum(v / (delta + v))) - 1.0

    if g(0.0) < 0.0:
        return None
    lo, hi = 0.0, max(1.0, float(v.max()))
    while g(hi) > 0.0:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def importance_probs(dataset, lam: float = 0.0,
                     mode: str = "uniform") -> IndexDistribution:
    """Serial sampling probabilities from row geometry.

    uniform mode gives p_i = 1/n. importance mode gives
    p_i proportional to v_i/(delta+v_i) with v_i = ||a_i||^2 + lam and
    delta >= 0 solving sum_i v_i/(delta+v_i) = 1; if that equation has no
    root the construction falls back to delta=0 and renormalizes, flagging
    the result. Either way the returned p is renormalized to sum exactly 1.
    """
    if mode == "uniform":
        return uniform_dist(dataset.n)
    if mode != "importance":
        raise ValueError(f"unknown mode {mode!r}")
    norms = dataset.row_norms()
    v = norms * norms + lam
    if np.any(v <= 0):
        raise ValueError("importance mode needs ||a_i||^2 + lam > 0 per row")
    delta = _solve_delta(v)
    fallback = delta is None
    if fallback:
        delta = 0.0
    p = v / (delta + v)
    p = p / p.sum()
    return IndexDistribution(p, delta=delta, used_fallback=fallback)


def inclusion_probs(p, tau: int) -> np.ndarray:
    """Independent-sampling inclusion probabilities by water-filling.

    Scales the base probabilities p up to q_i = min(1, s*p_i) with s chosen
    so sum(q) = tau. Every q_i lands in (0, 1].
    """
    p = p.p if isinstance(p, IndexDistribution) else np.asarray(p, np.float64)
    n = p.size
    if not 1 <= tau <= n:
        raise ValueError(f"tau must be in 1..{n}, got {tau}")
    if tau == n:
        return np.ones(n)

    def total(s):
        return float(np.sum(np.minimum(1.0, s * p)))

    lo, hi = 0.0, 1.0 / float(p.min())
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if total(mid) < tau:
            lo = mid
        else:
            hi = mid
    q = np.minimum(1.0, 0.5 * (lo + hi) * p)
    if abs(float(q.sum()) - tau) > 1e-9 * tau:
        raise RuntimeError("water-filling failed to hit the target size")
    return q


class Sampling:
    """A sampling scheme: serial, with-replacement minibatch, or
    independent-inclusion. Purely a validated parameter bundle."""

    def __init__(self, kind: str, dist: IndexDistribution = None,
                 q: np.ndarray = None, tau: int = 1):
        if kind not in ("serial", "with_replacement", "independent"):
            raise ValueError(f"unknown sampling kind {kind!r}")
        self.kind = kind
        self.dist = dist
        self.tau = int(tau)
        if kind in ("serial", "with_replacement"):
            if dist is None:
                raise ValueError(f"{kind} sampling needs a distribution")
            if kind == "with_replacement" and self.tau < 1:
                raise ValueError("tau must be >= 1")
        else:
            q = np.asarray(q, dtype=np.float64)
            if np.any(q <= 0) or np.any(q > 1):
                raise ValueError("inclusion probabilities must be in (0,1]")
            if abs(float(q.sum()) - self.tau) > 1e-9 * max(1, self.tau):
                raise ValueError("inclusion probabilities must sum to tau")
            self.q = q


def expected_smoothness(problem: Problem, dist) -> float:
    """Certified expected-smoothness bound max_i L_i/(n p_i) for serial
    sampling with probabilities p."""
    p = dist.p if isinstance(dist, IndexDistribution) else \
        np.asarray(dist, dtype=np.float64)
    return float(np.max(problem.L_i / (problem.n * p)))
