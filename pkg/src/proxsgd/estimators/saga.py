"""Gradient-table estimators: SAGA and its noisy-oracle variant.

The table stores one gradient per component, anchored at the point where
that component was last touched. The running table average is maintained
incrementally (O(d) per step) and recomputed from the table every n steps to
keep floating-point drift out of long runs.
"""

from __future__ import annotations

import numpy as np

from .. import theory
from ..problems import NoisyOracle
from ..rng import uniform_index
from .base import Estimator


class SAGA(Estimator):
    """g = grad f_j(x) - table_j + mean(table), j uniform; then table_j is
    replaced by grad f_j(x)."""

    method_id = "saga"
    _state = ("table", "avg", "steps")

    def __init__(self, problem):
        self.problem = problem
        self.table = None
        self.avg = None
        self.steps = 0

    def start(self, x0):
        self.table = self.problem.grads_at(x0)
        self.avg = self.table.mean(axis=0)
        self.steps = 0

    def _component_grad(self, j, x, streams):
        return self.problem.grad_i(j, x)

    def next(self, x, streams):
        n = self.problem.n
        j = uniform_index(streams.index.random(), n)
        fresh = self._component_grad(j, x, streams)
        g = fresh - self.table[j] + self.avg
        self.avg = self.avg + (fresh - self.table[j]) / n
        self.table[j] = fresh
        self.steps += 1
        if self.steps % n == 0:
            self.avg = self.table.mean(axis=0)
        return g

    def sigma_sq(self, ref):
        diff = self.table - ref.star_grads
        return float(np.einsum("ij,ij->", diff, diff)) / self.problem.n

    def param_set(self, ref=None):
        return theory.method_constants("saga", L=self.problem.L,
                                       n=self.problem.n)


class NSAGA(SAGA):
    """SAGA fed by a noisy full-gradient oracle; the table stores the noisy
    gradients, so the estimator inherits a noise floor."""

    method_id = "n_saga"

    def __init__(self, oracle: NoisyOracle):
        if oracle.mode != "full":
            raise ValueError("n_saga needs a full-gradient noise oracle")
        super().__init__(oracle.base)
        self.oracle = oracle

    def start(self, x0):
        # The initial table is built from n noisy oracle calls, one per
        # component, consuming noise draws in component order.
        self.table = np.empty((self.problem.n, self.problem.d))
        self._start_x0 = np.array(x0, dtype=np.float64)
        self._pending_init = True
        self.avg = None
        self.steps = 0

    def _ensure_table(self, streams):
        if self._pending_init:
            for i in range(self.problem.n):
                self.table[i] = self.oracle.grad_i(i, self._start_x0,
                                                   streams.noise)
            self.avg = self.table.mean(axis=0)
            self._pending_init = False

    def _component_grad(self, j, x, streams):
        return self.oracle.grad_i(j, x, streams.noise)

    def next(self, x, streams):
        self._ensure_table(streams)
        return super().next(x, streams)

    def sigma_sq(self, ref):
        if self._pending_init:
            raise RuntimeError("state not materialized yet; step first")
        return super().sigma_sq(ref)

    def param_set(self, ref=None):
        return theory.method_constants("n_saga", L=self.problem.L,
                                       n=self.problem.n,
                                       noise_sq=self.oracle.sigma_sq)

    _state = SAGA._state + ("_pending_init", "_start_x0")
