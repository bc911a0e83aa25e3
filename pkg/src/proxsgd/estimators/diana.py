"""Quantized-shift estimators: DIANA and its variance-reduced extension.

Nodes are simulated in-process: the component range is split into equal
contiguous blocks, one per node, and "communication" is a loop. Per step,
every node quantizes the difference between its local gradient estimate and
its shift h_i, the server averages the compressed corrections, and each
shift absorbs an alpha-fraction of its own correction.

Per-stream draw order within a step: component indices (VR variant) and
additive noise (stochastic mode) are consumed in node order; quantizer
draws are consumed in node order; the epoch coin (VR variant 1) is a single
shared draw.
"""

from __future__ import annotations

import numpy as np

from .. import theory
from ..rng import uniform_index
from .base import Estimator


def partition_rows(n_components: int, nodes: int):
    """Equal contiguous blocks, one per node."""
    if nodes < 1 or n_components % nodes != 0:
        raise ValueError(
            f"cannot split {n_components} components over {nodes} nodes")
    m = n_components // nodes
    return [np.arange(i * m, (i + 1) * m) for i in range(nodes)]


class DIANA(Estimator):
    """Shifted quantized aggregation of per-node gradients.

    Parameters
    ----------
    problem : Problem
    nodes : int
        Number of simulated nodes; must divide the component count.
    quantizer : Quantizer
    alpha : float
        Shift learning rate; must lie in (0, 1/(1+omega)].
    mode : {"exact", "stochastic"}
        Node-local gradients are exact block averages, or carry additive
        Gaussian noise with total variance ``noise_sq``.
    """

    method_id = "diana"
    _state = ("shifts", "h_mean")

    def __init__(self, problem, nodes, quantizer, alpha, mode="exact",
                 noise_sq=0.0):
        if mode not in ("exact", "stochastic"):
            raise ValueError(f"unknown gradient mode {mode!r}")
        if mode == "exact" and noise_sq:
            raise ValueError("exact mode cannot carry noise")
        omega = quantizer.omega_for(problem.d)
        if not 0.0 < alpha <= 1.0 / (1.0 + omega):
            raise ValueError(
                f"alpha={alpha} outside (0, 1/(1+omega)] = (0, "
                f"{1.0 / (1.0 + omega)}]")
        self.problem = problem
        self.blocks = partition_rows(problem.n, nodes)
        self.nodes = nodes
        self.quantizer = quantizer
        self.alpha = float(alpha)
        self.mode = mode
        self.noise_sq = float(noise_sq)
        self._noise_scale = np.sqrt(self.noise_sq / problem.d)
        self.shifts = None
        self.h_mean = None

    def start(self, x0):
        self.shifts = np.zeros((self.nodes, self.problem.d))
        self.h_mean = np.zeros(self.problem.d)

    def _node_grad(self, i, x, streams):
        g = self.problem.grads_at(x, rows=self.blocks[i]).mean(axis=0)
        if self.mode == "stochastic":
            g = g + self._noise_scale * \
                streams.noise.standard_normal(self.problem.d)
        return g

    def next(self, x, streams):
        agg = np.zeros(self.problem.d)
        hat_sum = np.zeros(self.problem.d)
        for i in range(self.nodes):
            delta = self._node_grad(i, x, streams) - self.shifts[i]
            hat = self.quantizer.apply(delta, streams.quantizer)
            agg += self.shifts[i] + hat
            hat_sum += hat
            self.shifts[i] += self.alpha * hat
        self.h_mean = self.h_mean + (self.alpha / self.nodes) * hat_sum
        return agg / self.nodes

    def node_star_grads(self, ref):
        return np.stack([ref.star_grads[b].mean(axis=0) for b in self.blocks])

    def sigma_sq(self, ref):
        diff = self.shifts - self.node_star_grads(ref)
        return float(np.einsum("ij,ij->", diff, diff)) / self.nodes

    def aggregate_residual(self) -> float:
        """Drift between the maintained server shift and the exact node
        average (bookkeeping invariant)."""
        return float(np.max(np.abs(self.h_mean - self.shifts.mean(axis=0))))

    def param_set(self, ref=None):
        L = max(self.problem.block_smoothness(b) for b in self.blocks)
        omega = self.quantizer.omega_for(self.problem.d)
        return theory.method_constants(
            "diana", L=L, nodes=self.nodes, omega=omega, alpha=self.alpha,
            noise_sq=self.noise_sq)


class VRDIANA(Estimator):
    """DIANA with variance-reduced node gradients.

    Each node keeps a gradient table over its m local components. Variant 1
    refreshes every table entry to the current iterate when a shared 1/m
    coin fires; variant 2 refreshes the single sampled entry each step.
    """

    method_id = "vr_diana"
    _state = ("shifts", "h_mean", "wgrad", "mu")

    def __init__(self, problem, nodes, quantizer, alpha, variant=1):
        if variant not in (1, 2):
            raise ValueError(f"variant must be 1 or 2, got {variant!r}")
        omega = quantizer.omega_for(problem.d)
        self.blocks = partition_rows(problem.n, nodes)
        self.m = problem.n // nodes
        bound = min(1.0 / (3.0 * self.m), 1.0 / (1.0 + omega))
        if not 0.0 < alpha <= bound:
            raise ValueError(
                f"alpha={alpha} outside (0, min(1/3m, 1/(1+omega))] = "
                f"(0, {bound}]")
        self.problem = problem
        self.nodes = nodes
        self.quantizer = quantizer
        self.alpha = float(alpha)
        self.variant = variant
        self.shifts = None
        self.h_mean = None
        self.wgrad = None
        self.mu = None

    def start(self, x0):
        d = self.problem.d
        self.shifts = np.zeros((self.nodes, d))
        self.h_mean = np.zeros(d)
        self.wgrad = self.problem.grads_at(x0).reshape(
            self.nodes, self.m, d).copy()
        self.mu = self.wgrad.mean(axis=1)

    def next(self, x, streams):
        m, d = self.m, self.problem.d
        picks = [uniform_index(streams.index.random(), m)
                 for _ in range(self.nodes)]
        refresh = False
        if self.variant == 1:
            refresh = streams.coin.random() < 1.0 / m

        agg = np.zeros(d)
        hat_sum = np.zeros(d)
        fresh = []
        for i, j in enumerate(picks):
            row = int(self.blocks[i][j])
            grad_x = self.problem.grad_i(row, x)
            fresh.append(grad_x)
            g_i = grad_x - self.wgrad[i, j] + self.mu[i]
            hat = self.quantizer.apply(g_i - self.shifts[i],
                                       streams.quantizer)
            agg += self.shifts[i] + hat
            hat_sum += hat
            self.shifts[i] += self.alpha * hat
        self.h_mean = self.h_mean + (self.alpha / self.nodes) * hat_sum

        if self.variant == 2:
            for i, j in enumerate(picks):
                self.mu[i] += (fresh[i] - self.wgrad[i, j]) / m
                self.wgrad[i, j] = fresh[i]
        elif refresh:
            self.wgrad = self.problem.grads_at(x).reshape(
                self.nodes, m, d).copy()
            self.mu = self.wgrad.mean(axis=1)
        return agg / self.nodes

    def node_star_grads(self, ref):
        return np.stack([ref.star_grads[b].mean(axis=0) for b in self.blocks])

    def sigma_sq(self, ref):
        h_diff = self.shifts - self.node_star_grads(ref)
        h_term = float(np.einsum("ij,ij->", h_diff, h_diff))
        w_diff = self.wgrad - ref.star_grads.reshape(
            self.nodes, self.m, -1)
        w_term = float(np.einsum("ijk,ijk->", w_diff, w_diff))
        return h_term / self.nodes + w_term / (self.nodes * self.m)

    def table_mean_residual(self) -> float:
        """Drift between the incrementally maintained per-node table means
        and a from-scratch recomputation."""
        return float(np.max(np.abs(self.mu - self.wgrad.mean(axis=1))))

    def aggregate_residual(self) -> float:
        return float(np.max(np.abs(self.h_mean - self.shifts.mean(axis=0))))

    def param_set(self, ref=None):
        omega = self.quantizer.omega_for(self.problem.d)
        return theory.method_constants(
            "vr_diana", L=self.problem.L, nodes=self.nodes, omega=omega,
            alpha=self.alpha, m=self.m)
