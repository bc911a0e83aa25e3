"""Unbiased randomized compressors with certified variance factors.

Every quantizer Q satisfies E[Q(x)] = x and E||Q(x)-x||^2 <= omega*||x||^2.
rand_k is the workhorse: its factor d/k-1 is tight and checkable by
exhaustive enumeration. Ternary dithering ships with the conservative
certificate omega = d (from ||x||_1 <= sqrt(d)||x||); its exact deviation is
||x||*||x||_1 - ||x||^2.
"""

from __future__ import annotations

import numpy as np


class Quantizer:
    """Compression operator of a fixed kind.

    Parameters
    ----------
    kind : {"identity", "rand_k", "dithering_ternary"}
    k : int
        Support size for rand_k; ignored otherwise.

    Attributes
    ----------
    omega : float or None
        Certified variance factor. rand_k's depends on the (runtime)
        dimension, so it is exposed via ``omega_for(d)``; the attribute is
        None until the kind pins it without knowing d.
    """

    def __init__(self, kind: str, k: int = 1):
        if kind not in ("identity", "rand_k", "dithering_ternary"):
            raise ValueError(f"unknown quantizer kind {kind!r}")
        self.kind = kind
        self.k = int(k)
        if kind == "rand_k" and self.k < 1:
            raise ValueError("rand_k needs k >= 1")
        self.omega = 0.0 if kind == "identity" else None

    def omega_for(self, d: int) -> float:
        """Certified variance factor at dimension d."""
        if self.kind == "identity":
            return 0.0
        if self.kind == "rand_k":
            if self.k > d:
                raise ValueError(f"rand_k with k={self.k} > d={d}")
            return d / self.k - 1.0
        return float(d)

    def apply(self, x: np.ndarray, rng) -> np.ndarray:
        """One random compression of x. Zero vectors pass through without
        consuming any randomness."""
        if self.kind == "identity":
            return x.copy()
        if not np.any(x):
            return x.copy()
        d = x.size
        if self.kind == "rand_k":
            if self.k > d:
                raise ValueError(f"rand_k with k={self.k} > d={d}")
            support = _partial_shuffle(d, self.k, rng)
            out = np.zeros_like(x)
            out[support] = (d / self.k) * x[support]
            return out
        norm = float(np.linalg.norm(x))
        u = rng.random(d)
        keep = u < np.abs(x) / norm
        return np.where(keep, np.sign(x) * norm, 0.0)

    def expected_sq_dev(self, x: np.ndarray) -> float:
        """Exact E||Q(x)-x||^2 for this kind at this input."""
        sq = float(x @ x)
        if self.kind == "identity":
            return 0.0
        if self.kind == "rand_k":
            return (x.size / self.k - 1.0) * sq
        norm = np.sqrt(sq)
        return norm * float(np.abs(x).sum()) - sq

    def __repr__(self):
        if self.kind == "rand_k":
            return f"Quantizer(rand_k, k={self.k})"
        return f"Quantizer({self.kind})"


def _partial_shuffle(d: int, k: int, rng) -> np.ndarray:
    """First k entries of a Fisher-Yates shuffle of range(d): a uniform
    k-subset in uniform order, consuming exactly k integer draws."""
    perm = np.arange(d)
    for t in range(k):
        j = int(rng.integers(t, d))
        perm[t], perm[j] = perm[j], perm[t]
    return perm[:k]


def identity() -> Quantizer:
    return Quantizer("identity")


def rand_k(k: int) -> Quantizer:
    return Quantizer("rand_k", k=k)


def dithering_ternary() -> Quantizer:
    return Quantizer("dithering_ternary")


def certify_omega(quantizer: Quantizer, vectors, samples: int, rng) -> float:
    """Monte Carlo estimate of the worst-case variance ratio.

    For each nonzero trial vector x, estimates E||Q(x)-x||^2 / ||x||^2 from
    ``samples`` independent applications and returns the max over vectors.
    The certified factor passes when omega_hat <= omega*(1 + 5*rel_err)
    with rel_err the sampling relative error 1/sqrt(samples); callers do
    that comparison.

    Raises
    ------
    ValueError
        If samples < 1e4 (too noisy to certify anything).
    """
    if samples < 10_000:
        raise ValueError("certification needs at least 1e4 samples")
    worst = 0.0
    for x in vectors:
        x = np.asarray(x, dtype=np.float64)
        sq = float(x @ x)
        if sq == 0.0:
            continue
        total = 0.0
        for _ in range(samples):
            diff = quantizer.apply(x, rng) - x
            total += float(diff @ diff)
        worst = max(worst, total / samples / sq)
    return worst
