"""Certified constants and convergence predictions.

Every estimator is summarized by six nonnegative constants tying its second
moment and auxiliary-state recursion to the Bregman divergence from the
minimizer:

    E[||g - grad(x*)||^2]   <= 2*curvature*D_f(x, x*)
                               + state_weight*state_var + grad_noise
    E[state_var_next]       <= (1 - state_decay)*state_var
                               + 2*state_curvature*D_f(x, x*) + state_noise

From these, one Lyapunov weight M turns both recursions into a single
contraction of V = dist_sq + M*gamma^2*state_var, with an additive floor
(grad_noise + M*state_noise)*gamma^2. This module holds the per-method
constants, the stepsize bound, the contraction/neighborhood arithmetic, the
composition rules for combined estimators, and an empirical checker for the
one-step recurrence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ParamSet:
    """The six certified constants of one estimator instance."""

    curvature: float        # weights the Bregman term in the moment bound
    state_weight: float     # weights the auxiliary-state variance
    state_decay: float      # per-step decay of the state variance
    state_curvature: float  # Bregman feed-in to the state recursion
    grad_noise: float       # additive floor of the moment bound
    state_noise: float      # additive floor of the state recursion

    def __post_init__(self):
        for name in ("curvature", "state_weight", "state_curvature",
                     "grad_noise", "state_noise"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")
        if not 0.0 <= self.state_decay <= 1.0:
            raise ValueError("state_decay must lie in [0, 1]")

    def as_dict(self):
        return {
            "curvature": self.curvature,
            "state_weight": self.state_weight,
            "state_decay": self.state_decay,
            "state_curvature": self.state_curvature,
            "grad_noise": self.grad_noise,
            "state_noise": self.state_noise,
        }


@dataclass(frozen=True)
class RateReport:
    """What the one-step contraction theorem predicts for a given run."""

    gamma_max: float
    contraction: float
    neighborhood: float
    iteration_complexity: float
    applicable: bool


@dataclass(frozen=True)
class EpochReport:
    """Anchor-restart methods with state_decay = 0 escape the generic
    theorem; their guarantee is a per-step inequality

        E[dist_sq_next] + bregman_coeff*E[D_f] <=
            dist_factor*E[dist_sq] + sigma_coeff*E[state_var]

    which, summed over an epoch of length m, bounds the suboptimality of
    the averaged iterate by epoch_factor times its previous value."""

    dist_factor: float
    bregman_coeff: float
    sigma_coeff: float
    epoch_factor: float


def _constants_sgd(es, sigma_sq):
    return ParamSet(2.0 * es, 0.0, 1.0, 0.0, 2.0 * sigma_sq, 0.0)


def _constants_sgd_mb(es, L, tau, sigma_sq):
    return ParamSet((2.0 * es + L * (tau - 1.0)) / tau, 0.0, 1.0, 0.0,
                    2.0 * sigma_sq / tau, 0.0)


def _constants_sgd_star(es):
    return ParamSet(2.0 * es, 0.0, 1.0, 0.0, 0.0, 0.0)


def _constants_saga(L, n):
    return ParamSet(2.0 * L, 2.0, 1.0 / n, L / n, 0.0, 0.0)


def _constants_n_saga(L, n, noise_sq):
    return ParamSet(2.0 * L, 2.0, 1.0 / n, L / n, 2.0 * noise_sq,
                    noise_sq / n)


def _constants_sega(L, d):
    return ParamSet(2.0 * d * L, 2.0 * d, 1.0 / d, L / d, 0.0, 0.0)


def _constants_n_sega(L, d, noise_sq):
    return ParamSet(2.0 * d * L, 2.0 * d, 1.0 / d, L / d,
                    2.0 * d * noise_sq, noise_sq / d)


def _constants_svrg(L):
    # state_decay 0: the anchor only moves at epoch boundaries, so the
    # generic theorem never applies; see EpochReport.
    return ParamSet(2.0 * L, 2.0, 0.0, 0.0, 0.0, 0.0)


def _constants_l_svrg(L, p):
    return ParamSet(2.0 * L, 2.0, p, L * p, 0.0, 0.0)


def _constants_diana(L, nodes, omega, alpha, noise_sq=0.0):
    return ParamSet((1.0 + 2.0 * omega / nodes) * L, 2.0 * omega / nodes,
                    alpha, L * alpha, (1.0 + omega) * noise_sq / nodes,
                    alpha * noise_sq)


def _constants_q_sgd_sr(es, omega, sigma_sq):
    return ParamSet(2.0 * (1.0 + omega) * es, 0.0, 1.0, 0.0,
                    2.0 * (1.0 + omega) * sigma_sq, 0.0)


def _constants_vr_diana(L, nodes, omega, alpha, m):
    return ParamSet((1.0 + (4.0 * omega + 2.0) / nodes) * L,
                    2.0 * (omega + 1.0) / nodes, alpha,
                    (1.0 / m + 4.0 * alpha) * L, 0.0, 0.0)


_CONSTANTS = {
    "sgd": _constants_sgd,
    "sgd_mb": _constants_sgd_mb,
    "sgd_star": _constants_sgd_star,
    "saga": _constants_saga,
    "n_saga": _constants_n_saga,
    "sega": _constants_sega,
    "n_sega": _constants_n_sega,
    "svrg": _constants_svrg,
    "l_svrg": _constants_l_svrg,
    "diana": _constants_diana,
    "q_sgd_sr": _constants_q_sgd_sr,
    "vr_diana": _constants_vr_diana,
}


def method_constants(method: str, **kwargs) -> ParamSet:
    """Look up the certified constants for a method.

    Parameters
    ----------
    method : str
        One of the catalogued method ids.
    **kwargs
        The method's structural inputs: ``es`` (expected smoothness over
        the sampling), ``L`` (smoothness), ``n``/``d``/``nodes``/``m``
        (problem sizes), ``tau``/``p``/``alpha``/``omega`` (method knobs),
        ``sigma_sq``/``noise_sq`` (noise levels at the minimizer).

    Returns
    -------
    ParamSet
    """
    try:
        builder = _CONSTANTS[method]
    except KeyError:
        known = ", ".join(sorted(_CONSTANTS))
        raise ValueError(f"unknown method {method!r}; known: {known}") \
            from None
    return builder(**kwargs)


def compose_combination(parts, weights, smoothness=None,
                        mode="independent") -> ParamSet:
    """Constants for a fixed-weight average of child gradients.

    In the ``independent`` mode (each child draws its own randomness, as
    ConvexCombination does) the cross terms collapse to the full gradient
    and cost one extra ``smoothness`` unit of curvature but square the
    weights everywhere else. The ``dependent`` mode bounds arbitrarily
    correlated children by plain convexity.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(parts),):
        raise ValueError("need one weight per part")
    if np.any(weights < 0.0) or abs(float(weights.sum()) - 1.0) > 1e-12:
        raise ValueError("weights must be nonnegative and sum to 1")
    if mode not in ("independent", "dependent"):
        raise ValueError(f"unknown composition mode {mode!r}")
    if mode == "independent":
        if smoothness is None:
            raise ValueError(
                "independent composition needs the objective smoothness")
        w = weights ** 2
        base = float(smoothness)
    else:
        w = weights
        base = 0.0
    return ParamSet(
        curvature=base + sum(
            float(wj) * p.curvature for wj, p in zip(w, parts)),
        state_weight=1.0,
        state_decay=min(p.state_decay for p in parts),
        state_curvature=sum(
            float(wj) * p.state_curvature * p.state_weight
            for wj, p in zip(w, parts)),
        grad_noise=sum(
            float(wj) * p.grad_noise for wj, p in zip(w, parts)),
        state_noise=sum(
            float(wj) * p.state_noise * p.state_weight
            for wj, p in zip(w, parts)),
    )


def compose_switch(parts, probs) -> ParamSet:
    """Constants for delegating each step to child j with probability
    probs[j]; the tower property keeps the child weights linear."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != (len(parts),):
        raise ValueError("need one probability per part")
    if np.any(probs < 0.0) or abs(float(probs.sum()) - 1.0) > 1e-12:
        raise ValueError("probabilities must be nonnegative and sum to 1")
    return ParamSet(
        curvature=sum(float(pj) * p.curvature for pj, p in zip(probs, parts)),
        state_weight=1.0,
        state_decay=min(p.state_decay for p in parts),
        state_curvature=sum(
            float(pj) * p.state_weight * p.state_curvature
            for pj, p in zip(probs, parts)),
        grad_noise=sum(
            float(pj) * p.grad_noise for pj, p in zip(probs, parts)),
        state_noise=sum(
            float(pj) * p.state_weight * p.state_noise
            for pj, p in zip(probs, parts)),
    )


def default_weight(params: ParamSet) -> float:
    """The Lyapunov weight used when the caller does not pick one: twice
    the smallest admissible value. Reproduces every catalogued tuning
    (4n, 4d^2, 4/p, ...) up to rounding."""
    if params.state_weight == 0.0:
        return 0.0
    if params.state_decay == 0.0:
        return math.inf
    return 2.0 * params.state_weight / params.state_decay


def _weight_ratio(params: ParamSet, weight: float) -> float:
    """state_weight/weight with the convention that a method with no state
    term has ratio 0 whatever the weight (including weight 0)."""
    if params.state_weight == 0.0:
        return 0.0
    return params.state_weight / weight


def _check_weight(params: ParamSet, weight: float) -> None:
    if weight < 0.0 or math.isnan(weight):
        raise ValueError(f"lyapunov weight must be nonnegative, got {weight}")
    if params.state_weight > 0.0:
        if params.state_decay == 0.0:
            raise ValueError(
                "state variance never decays; no finite weight works")
        floor = params.state_weight / params.state_decay
        if weight <= floor:
            raise ValueError(
                f"lyapunov weight {weight} must exceed "
                f"state_weight/state_decay = {floor}")


def stepsize_bound(params: ParamSet, mu: float, weight=None) -> float:
    """Largest stepsize the contraction theorem admits:
    min(1/mu, 1/(curvature + state_curvature*weight))."""
    if mu <= 0.0:
        raise ValueError(f"needs a strongly convex problem, got mu={mu}")
    if weight is None:
        weight = default_weight(params)
    _check_weight(params, weight)
    curv = params.curvature
    if params.state_curvature > 0.0 and weight > 0.0:
        curv = curv + params.state_curvature * weight
    return min(1.0 / mu, 1.0 / curv)


def rate(params: ParamSet, mu: float, gamma: float, weight=None) \
        -> RateReport:
    """Evaluate the contraction theorem at a concrete stepsize.

    Parameters
    ----------
    params : ParamSet
    mu : float
        Strong-convexity modulus; must be positive.
    gamma : float
        Stepsize; must be positive.
    weight : float, optional
        Lyapunov weight; defaults to twice the admissible floor.

    Returns
    -------
    RateReport
        With ``applicable=False`` when the state variance never decays
        (anchor-restart methods) or the stepsize exceeds the bound; the
        numeric fields are NaN in the never-decays case.
    """
    if mu <= 0.0:
        raise ValueError(f"needs a strongly convex problem, got mu={mu}")
    if gamma <= 0.0:
        raise ValueError(f"stepsize must be positive, got {gamma}")
    if params.state_weight > 0.0 and params.state_decay == 0.0:
        return RateReport(math.nan, math.nan, math.nan, math.nan, False)
    if weight is None:
        weight = default_weight(params)
    _check_weight(params, weight)

    ratio = _weight_ratio(params, weight)
    contraction = max(1.0 - gamma * mu, 1.0 + ratio - params.state_decay)
    gap = min(gamma * mu, params.state_decay - ratio)
    noise = params.grad_noise
    if params.state_noise > 0.0:
        noise = noise + weight * params.state_noise
    neighborhood = 0.0 if noise == 0.0 else noise * gamma ** 2 / gap
    complexity = max(1.0 / (gamma * mu),
                     1.0 / (params.state_decay - ratio))
    g_max = stepsize_bound(params, mu, weight)
    applicable = gamma <= g_max * (1.0 + 1e-12)
    return RateReport(g_max, contraction, neighborhood, complexity,
                      applicable)


def epoch_rate(L: float, mu: float, gamma: float, m: int) -> EpochReport:
    """Per-step and per-epoch guarantees for the anchor-restart method
    whose state is frozen within epochs of length m."""
    if mu <= 0.0:
        raise ValueError(f"needs a strongly convex problem, got mu={mu}")
    if not 0.0 < gamma:
        raise ValueError(f"stepsize must be positive, got {gamma}")
    bregman_coeff = gamma * (1.0 - 2.0 * gamma * L)
    if bregman_coeff > 0.0:
        epoch_factor = 2.0 * (1.0 / mu + 2.0 * m * gamma ** 2 * L) \
            / (m * bregman_coeff)
    else:
        epoch_factor = math.inf
    return EpochReport(1.0 - gamma * mu, bregman_coeff,
                       2.0 * gamma ** 2, epoch_factor)


def alpha_bound(omega: float, table_size=None) -> float:
    """Admissible shift learning rate for quantized-shift methods."""
    bound = 1.0 / (1.0 + omega)
    if table_size is not None:
        bound = min(bound, 1.0 / (3.0 * table_size))
    return bound


def lyapunov(dist_sq, sigma_sq, gamma: float, weight: float):
    """dist_sq + weight*gamma^2*sigma_sq (weight 0 reduces to dist_sq)."""
    return dist_sq + weight * gamma ** 2 * sigma_sq


@dataclass(frozen=True)
class RecurrenceReport:
    """Outcome of the empirical one-step recurrence check."""

    ok: bool
    violations: tuple      # (iteration, excess beyond slack) pairs
    pairs_checked: int
    seeds: int


def check_recurrence(iters, values, params: ParamSet, mu: float,
                     gamma: float, weight=None) -> RecurrenceReport:
    """Test E[V_next] <= c^s E[V] + floor*(1 + c + ... + c^(s-1)) between
    consecutive recorded iterations s apart, on an ensemble of runs.

    Parameters
    ----------
    iters : array_like of int
        Strictly increasing recorded iteration numbers, shared by all runs.
    values : array_like, shape (seeds, len(iters))
        Lyapunov values per run and recorded iteration.
    params, mu, gamma, weight
        As in `rate`; fix the contraction c and additive floor.

    Returns
    -------
    RecurrenceReport
        A violation is a recorded iteration whose ensemble mean exceeds
        the predicted bound by more than 4 standard errors of the paired
        per-seed differences (plus a tiny rounding floor).
    """
    iters = np.asarray(iters)
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != iters.shape[0]:
        raise ValueError("values must be (seeds, len(iters))")
    n_seeds = values.shape[0]
    if n_seeds < 100:
        raise ValueError(f"need at least 100 seeds, got {n_seeds}")
    if np.any(np.diff(iters) <= 0):
        raise ValueError("iterations must be strictly increasing")

    if weight is None:
        weight = default_weight(params)
    report = rate(params, mu, gamma, weight)
    if not math.isfinite(report.contraction):
        raise ValueError("no one-step contraction exists for these params")
    c = report.contraction
    floor = (params.grad_noise + weight * params.state_noise) * gamma ** 2

    violations = []
    for t in range(len(iters) - 1):
        s = int(iters[t + 1] - iters[t])
        cs = c ** s
        if c == 1.0:
            additive = floor * s
        else:
            additive = floor * (1.0 - cs) / (1.0 - c)
        diffs = values[:, t + 1] - cs * values[:, t]
        mean = float(diffs.mean())
        se = float(diffs.std(ddof=1)) / math.sqrt(n_seeds)
        rounding = 1e-12 * float(np.abs(values[:, t:t + 2]).mean())
        slack = 4.0 * se + rounding
        if mean > additive + slack:
            violations.append((int(iters[t + 1]),
                               mean - additive - slack))
    return RecurrenceReport(not violations, tuple(violations),
                            len(iters) - 1, n_seeds)
