"""Anchor-point estimators: epoch SVRG and its loopless variant.

Both keep a full gradient at an anchor and correct a fresh component
gradient by the anchored one. SVRG moves the anchor (and the iterate) to
the epoch average every m steps; L-SVRG refreshes the anchor to the current
iterate by a Bernoulli coin each step.
"""

from __future__ import annotations

import numpy as np

from .. import theory
from ..rng import uniform_index
from .base import Estimator


class SVRG(Estimator):
    """g = grad f_i(x) - grad f_i(anchor) + grad f(anchor), i uniform.

    After every m proximal steps the epoch restarts: both the anchor and
    the iterate move to the average of the epoch's m iterates (the driver
    applies the replacement through post_step).
    """

    method_id = "svrg"
    _state = ("anchor", "full_grad", "acc", "inner")

    def __init__(self, problem, m: int):
        if m < 1:
            raise ValueError("epoch length m must be >= 1")
        self.problem = problem
        self.m = int(m)
        self.anchor = None
        self.full_grad = None
        self.acc = None
        self.inner = 0

    def start(self, x0):
        self.anchor = np.array(x0, dtype=np.float64)
        self.full_grad = self.problem.grad(self.anchor)
        self.acc = np.zeros(self.problem.d)
        self.inner = 0

    def next(self, x, streams):
        i = uniform_index(streams.index.random(), self.problem.n)
        return self.problem.grad_i(i, x) - \
            self.problem.grad_i(i, self.anchor) + self.full_grad

    def post_step(self, x):
        self.acc += x
        self.inner += 1
        if self.inner < self.m:
            return x
        avg = self.acc / self.m
        self.anchor = avg
        self.full_grad = self.problem.grad(avg)
        self.acc = np.zeros(self.problem.d)
        self.inner = 0
        return avg

    def sigma_sq(self, ref):
        diff = self.problem.grads_at(self.anchor) - ref.star_grads
        return float(np.einsum("ij,ij->", diff, diff)) / self.problem.n

    def param_set(self, ref=None):
        return theory.method_constants("svrg", L=self.problem.L)


class LSVRG(Estimator):
    """Loopless variant: after each gradient the anchor jumps to the
    pre-step iterate with probability p (full gradient recomputed then)."""

    method_id = "l_svrg"
    _state = ("anchor", "full_grad")

    def __init__(self, problem, p: float):
        if not 0.0 < p <= 1.0:
            raise ValueError("refresh probability must be in (0, 1]")
        self.problem = problem
        self.p = float(p)
        self.anchor = None
        self.full_grad = None

    def start(self, x0):
        self.anchor = np.array(x0, dtype=np.float64)
        self.full_grad = self.problem.grad(self.anchor)

    def next(self, x, streams):
        i = uniform_index(streams.index.random(), self.problem.n)
        g = self.problem.grad_i(i, x) - \
            self.problem.grad_i(i, self.anchor) + self.full_grad
        if streams.coin.random() < self.p:
            self.anchor = np.array(x, dtype=np.float64)
            self.full_grad = self.problem.grad(self.anchor)
        return g

    def sigma_sq(self, ref):
        diff = self.problem.grads_at(self.anchor) - ref.star_grads
        return float(np.einsum("ij,ij->", diff, diff)) / self.problem.n

    def param_set(self, ref=None):
        return theory.method_constants("l_svrg", L=self.problem.L,
                                       p=self.p)
