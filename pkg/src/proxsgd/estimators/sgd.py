"""Stateless estimators: plain/reweighted SGD, with-replacement minibatch,
independent-inclusion minibatch, the star-shifted variant, and the quantized
reformulation."""

from __future__ import annotations

import numpy as np

from .. import theory
from ..sampling import IndexDistribution, draw_with_replacement, \
    expected_smoothness
from .base import Estimator


def _need_ref(ref, method):
    if ref is None:
        raise ValueError(f"{method} constants need a reference solution "
                         "(the noise floor is measured at the minimizer)")
    return ref


class SGD(Estimator):
    """Serial reweighted SGD: g = grad f_i(x) / (n p_i), i ~ p.

    Parameters
    ----------
    problem : Problem
    dist : IndexDistribution
        Serial sampling probabilities (sums to 1).
    """

    method_id = "sgd"
    _state = ()

    def __init__(self, problem, dist: IndexDistribution):
        if dist.n != problem.n:
            raise ValueError("distribution size must match component count")
        self.problem = problem
        self.dist = dist
        self.scale = 1.0 / (problem.n * dist.p)

    def start(self, x0):
        pass

    def next(self, x, streams):
        i = self.dist.sample(streams.index)
        return self.scale[i] * self.problem.grad_i(i, x)

    def param_set(self, ref=None):
        es = expected_smoothness(self.problem, self.dist)
        sigma = _need_ref(ref, self.method_id).sigma_sq_serial(self.dist.p)
        return theory.method_constants("sgd", es=es, sigma_sq=sigma)


class SGDMB(Estimator):
    """With-replacement minibatch SGD: average of tau reweighted component
    gradients, indices drawn independently from dist."""

    method_id = "sgd_mb"
    _state = ()

    def __init__(self, problem, dist: IndexDistribution, tau: int):
        if dist.n != problem.n:
            raise ValueError("distribution size must match component count")
        if tau < 1:
            raise ValueError("tau must be >= 1")
        self.problem = problem
        self.dist = dist
        self.tau = int(tau)
        self.scale = 1.0 / (problem.n * dist.p)

    def start(self, x0):
        pass

    def next(self, x, streams):
        idx = draw_with_replacement(self.dist, self.tau, streams.index)
        grads = self.problem.grads_at(x, rows=idx)
        return (self.scale[idx, None] * grads).mean(axis=0)

    def param_set(self, ref=None):
        es = expected_smoothness(self.problem, self.dist)
        sigma = _need_ref(ref, self.method_id).sigma_sq_serial(self.dist.p)
        return theory.method_constants("sgd_mb", es=es, L=self.problem.L,
                                       tau=self.tau, sigma_sq=sigma)


class SGDInd(Estimator):
    """Independent-inclusion minibatch: each component joins the batch with
    its own probability q_i (sum q = expected size), and the batch gradient
    is (1/n) sum_{i in S} grad f_i(x)/q_i."""

    method_id = "sgd_ind"
    _state = ()

    def __init__(self, problem, q):
        q = np.asarray(q, dtype=np.float64)
        if q.shape != (problem.n,):
            raise ValueError("q must have one probability per component")
        if np.any(q <= 0) or np.any(q > 1):
            raise ValueError("inclusion probabilities must be in (0,1]")
        self.problem = problem
        self.q = q

    def start(self, x0):
        pass

    def next(self, x, streams):
        u = streams.index.random(self.problem.n)
        rows = np.nonzero(u < self.q)[0]
        if rows.size == 0:
            return np.zeros(self.problem.d)
        grads = self.problem.grads_at(x, rows=rows)
        return (grads / self.q[rows, None]).sum(axis=0) / self.problem.n

    def param_set(self, ref=None):
        # Not a catalogued row; the same argument that yields the serial
        # expected-smoothness bound gives, for independent inclusions,
        #   L_ind = L_f + max_i((1-q_i)/q_i * L_i)/n
        # and a noise floor E||grad f_S(x*)||^2 computable exactly from the
        # per-component star gradients.
        ref = _need_ref(ref, self.method_id)
        p = self.problem
        es = p.L_f + float(np.max((1.0 - self.q) / self.q * p.L_i)) / p.n
        star_sq = np.einsum("ij,ij->i", ref.star_grads, ref.star_grads)
        sigma = float(ref.grad_star @ ref.grad_star) + \
            float(np.sum((1.0 / self.q - 1.0) * star_sq)) / p.n ** 2
        return theory.method_constants("sgd", es=es, sigma_sq=sigma)


class SGDStar(Estimator):
    """Star-shifted serial SGD: g = (grad f_i(x) - grad f_i(x*))/(n p_i)
    + grad f(x*). Needs the per-component gradients at the minimizer."""

    method_id = "sgd_star"
    _state = ()

    def __init__(self, problem, dist: IndexDistribution, star_grads,
                 grad_star=None):
        if star_grads is None:
            raise ValueError("sgd_star needs the gradients at the minimizer")
        star_grads = np.asarray(star_grads, dtype=np.float64)
        if star_grads.shape != (problem.n, problem.d):
            raise ValueError("star_grads must be (n, d)")
        self.problem = problem
        self.dist = dist
        self.star_grads = star_grads
        self.grad_star = star_grads.mean(axis=0) if grad_star is None \
            else np.asarray(grad_star, dtype=np.float64)
        self.scale = 1.0 / (problem.n * dist.p)

    def start(self, x0):
        pass

    def next(self, x, streams):
        i = self.dist.sample(streams.index)
        diff = self.problem.grad_i(i, x) - self.star_grads[i]
        return self.scale[i] * diff + self.grad_star

    def param_set(self, ref=None):
        es = expected_smoothness(self.problem, self.dist)
        return theory.method_constants("sgd_star", es=es)


class QSGDSR(Estimator):
    """Quantized serial SGD: g = Q(grad f_i(x)/(n p_i))."""

    method_id = "q_sgd_sr"
    _state = ()

    def __init__(self, problem, dist: IndexDistribution, quantizer):
        self.problem = problem
        self.dist = dist
        self.quantizer = quantizer
        self.scale = 1.0 / (problem.n * dist.p)

    def start(self, x0):
        pass

    def next(self, x, streams):
        i = self.dist.sample(streams.index)
        g = self.scale[i] * self.problem.grad_i(i, x)
        return self.quantizer.apply(g, streams.quantizer)

    def param_set(self, ref=None):
        es = expected_smoothness(self.problem, self.dist)
        sigma = _need_ref(ref, self.method_id).sigma_sq_serial(self.dist.p)
        omega = self.quantizer.omega_for(self.problem.d)
        return theory.method_constants("q_sgd_sr", es=es, omega=omega,
                                       sigma_sq=sigma)
