"""Coordinate-sketch estimators: SEGA and its noisy-partial variant.

State is a single shift vector h tracking the full gradient one coordinate
per step; the estimator unbiasedly blows up the sampled coordinate residual
by the dimension.
"""

from __future__ import annotations

import numpy as np

from .. import theory
from ..problems import NoisyOracle
from ..rng import uniform_index
from .base import Estimator


class SEGA(Estimator):
    """g = h + d*(partial_c f(x) - h_c)*e_c with c uniform over
    coordinates; afterwards h_c is replaced by the fresh partial."""

    method_id = "sega"
    _state = ("h",)

    def __init__(self, problem):
        self.problem = problem
        self.h = None

    def start(self, x0):
        self.h = np.zeros(self.problem.d)

    def _partial(self, c, x, streams):
        return self.problem.partial(c, x)

    def next(self, x, streams):
        d = self.problem.d
        c = uniform_index(streams.index.random(), d)
        pc = self._partial(c, x, streams)
        g = self.h.copy()
        g[c] = self.h[c] + d * (pc - self.h[c])
        self.h[c] = pc
        return g

    def sigma_sq(self, ref):
        diff = self.h - ref.grad_star
        return float(diff @ diff)

    def param_set(self, ref=None):
        return theory.method_constants("sega", L=self.problem.L_f,
                                       d=self.problem.d)


class NSEGA(SEGA):
    """SEGA driven by noisy partial derivatives (variance sigma^2/d per
    coordinate query)."""

    method_id = "n_sega"

    def __init__(self, oracle: NoisyOracle):
        if oracle.mode != "partial":
            raise ValueError("n_sega needs a partial-derivative noise oracle")
        super().__init__(oracle.base)
        self.oracle = oracle

    def _partial(self, c, x, streams):
        return self.oracle.partial(c, x, streams.noise)

    def param_set(self, ref=None):
        return theory.method_constants("n_sega", L=self.problem.L_f,
                                       d=self.problem.d,
                                       noise_sq=self.oracle.sigma_sq)
