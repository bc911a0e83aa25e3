"""Estimators built from other estimators.

A convex combination averages the children's gradients with fixed weights;
a random switch delegates each step to one child drawn by fixed
probabilities. Children get independent randomness via ``streams.child(j)``
keyed by their position, so a child's trajectory of draws matches a
standalone run of the same estimator driven by that child stream.
"""

from __future__ import annotations

import numpy as np

from .. import theory
from ..sampling import IndexDistribution, uniform_dist
from .base import Estimator
from .sgd import SGD
from .svrg import LSVRG


class ConvexCombination(Estimator):
    """Weighted sum of child gradients, one independent draw per child.

    Parameters
    ----------
    children : sequence of Estimator
    weights : array_like
        Nonnegative, summing to 1.
    """

    method_id = "convex_combination"
    _state = ()

    def __init__(self, children, weights):
        weights = np.asarray(weights, dtype=np.float64)
        if len(children) == 0 or weights.shape != (len(children),):
            raise ValueError("need one weight per child")
        if np.any(weights < 0.0):
            raise ValueError("weights must be nonnegative")
        total = float(weights.sum())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {total!r}, not 1")
        self.children = list(children)
        self.weights = weights
        self.problem = self.children[0].problem

    def start(self, x0):
        for child in self.children:
            child.start(x0)

    def next(self, x, streams):
        g = np.zeros(self.problem.d)
        for j, child in enumerate(self.children):
            g += self.weights[j] * child.next(x, streams.child(j))
        return g

    def sigma_sq(self, ref):
        total = 0.0
        for j, child in enumerate(self.children):
            b = child.param_set(ref).state_weight
            total += b * self.weights[j] ** 2 * child.sigma_sq(ref)
        return total

    def param_set(self, ref=None):
        parts = [child.param_set(ref) for child in self.children]
        return theory.compose_combination(parts, self.weights,
                                          smoothness=self.problem.L)

    def snapshot(self):
        return {"children": [c.snapshot() for c in self.children]}

    def restore(self, snap):
        for child, s in zip(self.children, snap["children"]):
            child.restore(s)


class RandomSwitch(Estimator):
    """Delegates each step to one child picked by fixed probabilities;
    only the chosen child's state advances."""

    method_id = "random_switch"
    _state = ()

    def __init__(self, children, probs):
        if len(children) == 0:
            raise ValueError("need at least one child")
        self.children = list(children)
        self.dist = probs if isinstance(probs, IndexDistribution) \
            else IndexDistribution(probs)
        if self.dist.n != len(children):
            raise ValueError("need one probability per child")
        self.problem = self.children[0].problem

    def start(self, x0):
        for child in self.children:
            child.start(x0)

    def next(self, x, streams):
        j = self.dist.sample(streams.coin)
        return self.children[j].next(x, streams.child(j))

    def sigma_sq(self, ref):
        total = 0.0
        for j, child in enumerate(self.children):
            b = child.param_set(ref).state_weight
            total += self.dist.p[j] * b * child.sigma_sq(ref)
        return total

    def param_set(self, ref=None):
        parts = [child.param_set(ref) for child in self.children]
        return theory.compose_switch(parts, self.dist.p)

    def snapshot(self):
        return {"children": [c.snapshot() for c in self.children]}

    def restore(self, snap):
        for child, s in zip(self.children, snap["children"]):
            child.restore(s)


def tau_l_svrg(problem, tau, p):
    """Interpolation between uniform single-draw SGD (weight tau) and an
    anchor-based variance-reduced estimator (weight 1-tau)."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau!r}")
    children = [SGD(problem, uniform_dist(problem.n)), LSVRG(problem, p)]
    return ConvexCombination(children, [tau, 1.0 - tau])
