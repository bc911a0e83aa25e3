"""Empirical certification of estimator constants.

Two routes to the same truth, deliberately kept separate:

1. exact enumeration of finite-randomness estimators through the live
   ``next()`` (snapshot/restore between outcomes) -- proves unbiasedness to
   float precision;
2. vectorized one-step Monte Carlo samplers for the two moment inequalities
   behind every rate claim. The samplers consume pre-generated draw tables
   that can be replayed row-by-row into the live estimator through
   ``ScriptedStreams``, so tests can pin batch and live computations to the
   same randomness and compare outputs directly.

The batch route assumes quantizer inputs are nonzero vectors (the live
quantizer skips draws on exact zeros, which would desynchronize the
scripts); samplers raise if a zero vector shows up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from itertools import product

import numpy as np

from . import theory
from .rng import Streams

_CHUNK = 2048


# ----------------------------------------------------------------------------
# scripted randomness
# ----------------------------------------------------------------------------

class _Queue:
    """Replays a fixed sequence of values through the Generator methods the
    estimators use."""

    def __init__(self, values):
        self._values = [float(v) for v in np.asarray(values).ravel()]
        self._pos = 0

    def _pop(self, count):
        if self._pos + count > len(self._values):
            raise RuntimeError("scripted stream exhausted")
        out = self._values[self._pos:self._pos + count]
        self._pos += count
        return out

    @property
    def consumed(self):
        return self._pos == len(self._values)

    def random(self, size=None):
        if size is None:
            return self._pop(1)[0]
        return np.array(self._pop(int(size)), dtype=np.float64)

    def integers(self, low, high=None, size=None):
        if high is None:
            low, high = 0, low
        vals = self._pop(1 if size is None else int(size))
        for v in vals:
            if not low <= v < high:
                raise RuntimeError(
                    f"scripted integer {v} outside [{low}, {high})")
        if size is None:
            return int(vals[0])
        return np.array([int(v) for v in vals], dtype=np.int64)

    def standard_normal(self, size=None):
        if size is None:
            return self._pop(1)[0]
        return np.array(self._pop(int(size)), dtype=np.float64)


class ScriptedStreams:
    """Duck-typed stand-in for rng.Streams whose four streams replay queued
    values. Used to push one specific outcome through a live estimator."""

    def __init__(self, index=(), coin=(), quantizer=(), noise=(),
                 children=None):
        self.index = _Queue(index)
        self.coin = _Queue(coin)
        self.quantizer = _Queue(quantizer)
        self.noise = _Queue(noise)
        self._children = dict(children or {})

    def child(self, c):
        try:
            return self._children[c]
        except KeyError:
            raise RuntimeError(f"no scripted child stream {c}") from None

    @property
    def consumed(self):
        ok = (self.index.consumed and self.coin.consumed
              and self.quantizer.consumed and self.noise.consumed)
        return ok and all(ch.consumed for ch in self._children.values())


# ----------------------------------------------------------------------------
# route 1: exact enumeration
# ----------------------------------------------------------------------------

def _dist_midpoints(dist):
    """One uniform per index that the inverse-CDF sampler maps back to it."""
    lo = np.concatenate(([0.0], dist.cum[:-1]))
    return (lo + dist.cum) / 2.0


def enumeration_outcomes(est):
    """Yield (streams_kwargs, probability) covering the estimator's one-step
    randomness exactly. Only finite-randomness estimators enumerate."""
    mid_id = est.method_id
    if mid_id in ("sgd", "sgd_star"):
        mids = _dist_midpoints(est.dist)
        for i in range(est.dist.n):
            yield {"index": [mids[i]]}, float(est.dist.p[i])
    elif mid_id == "sgd_mb":
        mids = _dist_midpoints(est.dist)
        for combo in product(range(est.dist.n), repeat=est.tau):
            prob = float(np.prod(est.dist.p[list(combo)]))
            yield {"index": [mids[i] for i in combo]}, prob
    elif mid_id == "saga":
        n = est.problem.n
        for j in range(n):
            yield {"index": [(j + 0.5) / n]}, 1.0 / n
    elif mid_id == "sega":
        d = est.problem.d
        for c in range(d):
            yield {"index": [(c + 0.5) / d]}, 1.0 / d
    elif mid_id == "svrg":
        n = est.problem.n
        for i in range(n):
            yield {"index": [(i + 0.5) / n]}, 1.0 / n
    elif mid_id == "l_svrg":
        n, p = est.problem.n, est.p
        for i in range(n):
            u = (i + 0.5) / n
            yield {"index": [u], "coin": [p / 2.0]}, p / n
            if p < 1.0:
                yield {"index": [u], "coin": [(1.0 + p) / 2.0]}, (1.0 - p) / n
    else:
        raise ValueError(
            f"{mid_id} has continuous or compound randomness; use the Monte "
            "Carlo route")


def enumerate_mean(est, x):
    """Exact E[g] at state (est, x) by enumerating every outcome through the
    live next(). Returns (mean, n_outcomes); estimator state is restored."""
    snap = est.snapshot()
    total = np.zeros(est.problem.d)
    mass = 0.0
    count = 0
    for kwargs, prob in enumeration_outcomes(est):
        streams = ScriptedStreams(**kwargs)
        g = est.next(x, streams)
        if not streams.consumed:
            raise RuntimeError("estimator left scripted draws unconsumed")
        total += prob * g
        mass += prob
        count += 1
        est.restore(snap)
    if abs(mass - 1.0) > 1e-12:
        raise RuntimeError(f"enumeration mass {mass!r} != 1")
    return total, count


# ----------------------------------------------------------------------------
# route 2: draw tables + vectorized one-step moments
# ----------------------------------------------------------------------------

def _fy_columns(k, d, size, rng):
    """Column t holds draws from [t, d), matching one partial Fisher-Yates
    pass per row."""
    return np.stack([rng.integers(t, d, size=size) for t in range(k)],
                    axis=-1)


def _fy_supports(fy, d):
    """Convert FY draw rows (S, k) into the supports the live shuffle picks,
    draw-for-draw."""
    fy = np.asarray(fy)
    S, k = fy.shape
    arr = np.tile(np.arange(d), (S, 1))
    rows = np.arange(S)
    for t in range(k):
        j = fy[:, t]
        tmp = arr[rows, j].copy()
        arr[rows, j] = arr[rows, t]
        arr[rows, t] = tmp
    return arr[:, :k]


def _batch_quantize(quantizer, V, d, fy=None, qu=None):
    """Apply the quantizer to every row of V (S, d) with pre-drawn
    randomness. Raises on zero rows (the live path would skip their draws)."""
    if quantizer.kind == "identity":
        return np.array(V, dtype=np.float64, copy=True)
    V = np.asarray(V, dtype=np.float64)
    if np.any(~np.any(V != 0.0, axis=1)):
        raise RuntimeError("zero vector reached the batch quantizer; the "
                           "live path would skip its draws")
    if quantizer.kind == "rand_k":
        supports = _fy_supports(fy, d)
        out = np.zeros_like(V)
        rows = np.arange(V.shape[0])[:, None]
        out[rows, supports] = (d / quantizer.k) * V[rows, supports]
        return out
    norms = np.sqrt(np.einsum("ij,ij->i", V, V))
    keep = qu < np.abs(V) / norms[:, None]
    return np.where(keep, np.sign(V) * norms[:, None], 0.0)


def _searchsorted_draws(dist, u):
    idx = np.searchsorted(dist.cum, u, side="right")
    return np.minimum(idx, dist.n - 1).astype(np.int64)


def _uniform_index_draws(u, n):
    idx = (np.asarray(u) * n).astype(np.int64)
    return np.minimum(idx, n - 1)


def make_draws(est, samples, rng):
    """Pre-generate every random draw ``samples`` one-step evaluations of
    the estimator will consume, keyed by stream."""
    S = int(samples)
    mid = est.method_id
    d = est.problem.d
    draws = {"_samples": S}
    if mid in ("sgd", "sgd_star", "q_sgd_sr", "saga", "n_saga", "sega",
               "n_sega", "svrg", "l_svrg"):
        draws["index_u"] = rng.random(S)
    elif mid == "sgd_mb":
        draws["index_u"] = rng.random((S, est.tau))
    elif mid == "sgd_ind":
        draws["index_u"] = rng.random((S, est.problem.n))
    elif mid == "vr_diana":
        draws["index_u"] = rng.random((S, est.nodes))
    elif mid != "diana":
        raise ValueError(f"no batch sampler for method {mid!r}")

    if mid == "l_svrg" or (mid == "vr_diana" and est.variant == 1):
        draws["coin_u"] = rng.random(S)

    if mid == "q_sgd_sr":
        q = est.quantizer
        if q.kind == "rand_k":
            draws["fy"] = _fy_columns(q.k, d, S, rng)
        elif q.kind == "dithering_ternary":
            draws["qu"] = rng.random((S, d))
    elif mid in ("diana", "vr_diana"):
        q = est.quantizer
        if q.kind == "rand_k":
            draws["fy"] = _fy_columns(q.k, d, (S, est.nodes), rng)
        elif q.kind == "dithering_ternary":
            draws["qu"] = rng.random((S, est.nodes, d))

    if mid == "n_saga" and est.oracle.sigma_sq > 0:
        draws["noise"] = rng.standard_normal((S, d))
    elif mid == "n_sega" and est.oracle.sigma_sq > 0:
        draws["noise"] = rng.standard_normal(S)
    elif mid == "diana" and est.mode == "stochastic":
        draws["noise"] = rng.standard_normal((S, est.nodes, d))
    return draws


def script_for(est, draws, s):
    """ScriptedStreams replaying row s of a draw table through the live
    estimator, in its documented consumption order."""
    kw = {}
    draws = {k: v for k, v in draws.items() if k != "_samples"}
    if "index_u" in draws:
        kw["index"] = np.atleast_1d(draws["index_u"][s]).ravel()
    if "coin_u" in draws:
        kw["coin"] = [draws["coin_u"][s]]
    if "fy" in draws:
        kw["quantizer"] = np.atleast_2d(draws["fy"][s]).ravel()
    elif "qu" in draws:
        kw["quantizer"] = np.atleast_1d(draws["qu"][s]).ravel()
    if "noise" in draws:
        kw["noise"] = np.atleast_1d(draws["noise"][s]).ravel()
    return ScriptedStreams(**kw)


def _dev_sq_rows(vectors, target):
    diff = vectors - target
    return np.einsum("ij,ij->i", diff, diff)


def _moments_sgd(est, x, ref, draws):
    G = est.problem.grads_at(x)
    g = est.scale[:, None] * G
    row_dev = _dev_sq_rows(g, ref.grad_star)
    i = _searchsorted_draws(est.dist, draws["index_u"])
    S = i.shape[0]
    return row_dev[i], np.zeros(S)


def _moments_sgd_star(est, x, ref, draws):
    G = est.problem.grads_at(x)
    g = est.scale[:, None] * (G - est.star_grads) + est.grad_star
    row_dev = _dev_sq_rows(g, ref.grad_star)
    i = _searchsorted_draws(est.dist, draws["index_u"])
    return row_dev[i], np.zeros(i.shape[0])


def _moments_sgd_mb(est, x, ref, draws):
    G = est.problem.grads_at(x)
    W = est.scale[:, None] * G
    idx = _searchsorted_draws(est.dist, draws["index_u"].ravel()) \
        .reshape(draws["index_u"].shape)
    S = idx.shape[0]
    dev = np.empty(S)
    for lo in range(0, S, _CHUNK):
        sel = idx[lo:lo + _CHUNK]
        means = W[sel].mean(axis=1)
        dev[lo:lo + _CHUNK] = _dev_sq_rows(means, ref.grad_star)
    return dev, np.zeros(S)


def _moments_sgd_ind(est, x, ref, draws):
    G = est.problem.grads_at(x)
    W = G / (est.q[:, None] * est.problem.n)
    u = draws["index_u"]
    S = u.shape[0]
    dev = np.empty(S)
    for lo in range(0, S, _CHUNK):
        mask = (u[lo:lo + _CHUNK] < est.q).astype(np.float64)
        g = mask @ W
        dev[lo:lo + _CHUNK] = _dev_sq_rows(g, ref.grad_star)
    return dev, np.zeros(S)


def _moments_q_sgd_sr(est, x, ref, draws):
    d = est.problem.d
    G = est.problem.grads_at(x)
    V = est.scale[:, None] * G
    i = _searchsorted_draws(est.dist, draws["index_u"])
    rows = V[i]
    Q = _batch_quantize(est.quantizer, rows, d, fy=draws.get("fy"),
                        qu=draws.get("qu"))
    return _dev_sq_rows(Q, ref.grad_star), np.zeros(i.shape[0])


def _moments_saga(est, x, ref, draws, fresh=None, noise=None):
    n = est.problem.n
    G = est.problem.grads_at(x)
    j = _uniform_index_draws(draws["index_u"], n)
    S = j.shape[0]
    a = _dev_sq_rows(est.table, ref.star_grads)      # ||T_i - G*_i||^2
    total_a = float(a.sum())
    if noise is None:
        row_dev = _dev_sq_rows(G - est.table + est.avg, ref.grad_star)
        dev = row_dev[j]
        b = _dev_sq_rows(G, ref.star_grads)
        sigma_next = (total_a - a[j] + b[j]) / n
    else:
        base = (G - est.table + est.avg - ref.grad_star)[j] + noise
        dev = np.einsum("ij,ij->i", base, base)
        w = (G - ref.star_grads)[j] + noise
        sigma_next = (total_a - a[j]
                      + np.einsum("ij,ij->i", w, w)) / n
    return dev, sigma_next


def _moments_n_saga(est, x, ref, draws):
    if est._pending_init:
        raise RuntimeError("materialize the noisy table before sampling")
    noise = None
    if est.oracle.sigma_sq > 0:
        noise = est.oracle._scale_full * draws["noise"]
    return _moments_saga(est, x, ref, draws, noise=noise)


def _sega_pieces(est, x, ref):
    d = est.problem.d
    grad = est.problem.grad(x)
    hdev = est.h - ref.grad_star
    base = float(hdev @ hdev)
    except_c = base - hdev ** 2                    # ||h-g*||^2 minus coord c
    gc = est.h + d * (grad - est.h) - ref.grad_star  # coord c of g, deviated
    fresh_dev = grad - ref.grad_star
    return except_c, gc, fresh_dev


def _moments_sega(est, x, ref, draws):
    d = est.problem.d
    except_c, gc, fresh_dev = _sega_pieces(est, x, ref)
    c = _uniform_index_draws(draws["index_u"], d)
    dev = except_c[c] + gc[c] ** 2
    sigma_next = except_c[c] + fresh_dev[c] ** 2
    return dev, sigma_next


def _moments_n_sega(est, x, ref, draws):
    d = est.problem.d
    except_c, gc, fresh_dev = _sega_pieces(est, x, ref)
    c = _uniform_index_draws(draws["index_u"], d)
    z = np.zeros(c.shape[0])
    if est.oracle.sigma_sq > 0:
        z = est.oracle._scale_partial * draws["noise"]
    dev = except_c[c] + (gc[c] + d * z) ** 2
    sigma_next = except_c[c] + (fresh_dev[c] + z) ** 2
    return dev, sigma_next


def _moments_anchor(est, x, ref, draws, refresh_prob=None):
    n = est.problem.n
    G = est.problem.grads_at(x)
    Ga = est.problem.grads_at(est.anchor)
    row_dev = _dev_sq_rows(G - Ga + est.full_grad, ref.grad_star)
    i = _uniform_index_draws(draws["index_u"], n)
    dev = row_dev[i]
    sigma_cur = est.sigma_sq(ref)
    if refresh_prob is None:
        sigma_next = np.full(i.shape[0], sigma_cur)
    else:
        sigma_at_x = float(_dev_sq_rows(G, ref.star_grads).sum()) / n
        sigma_next = np.where(draws["coin_u"] < refresh_prob,
                              sigma_at_x, sigma_cur)
    return dev, sigma_next


def _moments_svrg(est, x, ref, draws):
    return _moments_anchor(est, x, ref, draws)


def _moments_l_svrg(est, x, ref, draws):
    return _moments_anchor(est, x, ref, draws, refresh_prob=est.p)


def _moments_diana(est, x, ref, draws):
    d = est.problem.d
    S = draws["_samples"]
    node_star = est.node_star_grads(ref)
    agg = np.zeros((S, d))
    sig_sum = np.zeros(S)
    for i in range(est.nodes):
        a = est.problem.grads_at(x, rows=est.blocks[i]).mean(axis=0)
        if est.mode == "stochastic":
            delta = a + est._noise_scale * draws["noise"][:, i, :] \
                - est.shifts[i]
        else:
            delta = np.broadcast_to(a - est.shifts[i], (S, d))
        hat = _batch_quantize(
            est.quantizer, delta, d,
            fy=draws["fy"][:, i, :] if "fy" in draws else None,
            qu=draws["qu"][:, i, :] if "qu" in draws else None)
        agg += est.shifts[i] + hat
        hnext = (est.shifts[i] - node_star[i]) + est.alpha * hat
        sig_sum += np.einsum("ij,ij->i", hnext, hnext)
    dev = _dev_sq_rows(agg / est.nodes, ref.grad_star)
    return dev, sig_sum / est.nodes


def _moments_vr_diana(est, x, ref, draws):
    d, m = est.problem.d, est.m
    S = draws["index_u"].shape[0]
    Gx = est.problem.grads_at(x)
    node_star = est.node_star_grads(ref)
    star_blocks = ref.star_grads.reshape(est.nodes, m, d)
    aw = np.einsum("ijk,ijk->ij", est.wgrad - star_blocks,
                   est.wgrad - star_blocks)        # (nodes, m)
    bx = _dev_sq_rows(Gx, ref.star_grads)          # (n,)
    d_cur = float(aw.sum())

    agg = np.zeros((S, d))
    h_sum = np.zeros(S)
    d_next = np.full(S, d_cur)
    for i in range(est.nodes):
        j = _uniform_index_draws(draws["index_u"][:, i], m)
        block = est.blocks[i]
        grad_x = Gx[block][j]                      # (S, d)
        g_i = grad_x - est.wgrad[i][j] + est.mu[i]
        hat = _batch_quantize(
            est.quantizer, g_i - est.shifts[i], d,
            fy=draws["fy"][:, i, :] if "fy" in draws else None,
            qu=draws["qu"][:, i, :] if "qu" in draws else None)
        agg += est.shifts[i] + hat
        hnext = (est.shifts[i] - node_star[i]) + est.alpha * hat
        h_sum += np.einsum("ij,ij->i", hnext, hnext)
        if est.variant == 2:
            d_next += bx[block][j] - aw[i][j]
    if est.variant == 1:
        d_next = np.where(draws["coin_u"] < 1.0 / m, float(bx.sum()), d_next)
    dev = _dev_sq_rows(agg / est.nodes, ref.grad_star)
    sigma_next = h_sum / est.nodes + d_next / (est.nodes * m)
    return dev, sigma_next


_MOMENTS = {
    "sgd": _moments_sgd,
    "sgd_mb": _moments_sgd_mb,
    "sgd_ind": _moments_sgd_ind,
    "sgd_star": _moments_sgd_star,
    "q_sgd_sr": _moments_q_sgd_sr,
    "saga": _moments_saga,
    "n_saga": _moments_n_saga,
    "sega": _moments_sega,
    "n_sega": _moments_n_sega,
    "svrg": _moments_svrg,
    "l_svrg": _moments_l_svrg,
    "diana": _moments_diana,
    "vr_diana": _moments_vr_diana,
}


def moment_samples(est, x, ref, samples, rng):
    """samples one-step evaluations at state (est, x): squared deviation of
    g from grad f(x*) and the post-step state variance."""
    try:
        fn = _MOMENTS[est.method_id]
    except KeyError:
        raise ValueError(
            f"no moment sampler for method {est.method_id!r}") from None
    draws = make_draws(est, samples, rng)
    return fn(est, x, ref, draws)


def moments_from_draws(est, x, ref, draws):
    """Same as moment_samples but with caller-provided draw tables (the
    live-agreement hook)."""
    return _MOMENTS[est.method_id](est, x, ref, draws)


# ----------------------------------------------------------------------------
# state generation and the assumption check
# ----------------------------------------------------------------------------

def make_state(est, ref, rng, radius, warmup, seed_base=0):
    """Drive the estimator into a reachable internal state, then move the
    evaluation point somewhere else at the given radius from x*.

    Returns the evaluation point; the estimator is left holding the state.
    """
    problem = est.problem
    d = problem.d
    u0 = rng.standard_normal(d)
    x0 = ref.x_star + radius * u0 / float(np.linalg.norm(u0))
    est.start(x0)
    if hasattr(est, "_ensure_table"):
        est._ensure_table(Streams(seed_base + int(rng.integers(1 << 30)),
                                  path=(101,)))
    if warmup > 0:
        params = est.param_set(ref)
        try:
            gamma = 0.5 * theory.stepsize_bound(params, problem.mu)
        except ValueError:
            gamma = 0.5 / params.curvature
        streams = Streams(seed_base + int(rng.integers(1 << 30)),
                          path=(202,))
        x = x0
        for _ in range(warmup):
            g = est.next(x, streams)
            x = problem.regularizer.prox(gamma, x - gamma * g)
            x = est.post_step(x)
    u1 = rng.standard_normal(d)
    return ref.x_star + radius * u1 / float(np.linalg.norm(u1))


@dataclass(frozen=True)
class StateCheck:
    """Both moment inequalities measured at one state."""

    radius: float
    warmup: int
    lhs_moment: float
    rhs_moment: float
    slack_moment: float
    ok_moment: bool
    lhs_state: float
    rhs_state: float
    slack_state: float
    ok_state: bool


@dataclass(frozen=True)
class AssumptionReport:
    method: str
    params: theory.ParamSet
    samples: int
    states: tuple

    @property
    def ok(self):
        return all(s.ok_moment and s.ok_state for s in self.states)

    @property
    def passes(self):
        return sum(s.ok_moment and s.ok_state for s in self.states)


def check_assumption(est, ref, samples=100_000, n_states=20, seed=0,
                     params=None, curvature_scale=1.0):
    """Monte Carlo check of both certified moment inequalities at a spread
    of states.

    Parameters
    ----------
    est : Estimator
    ref : ReferenceSolution
    samples : int
        One-step samples per state; must be >= 1e4.
    n_states : int
        States checked: radii log-spaced in [1e-2, 5] around x*, with 0-5
        warmup steps of real dynamics before each measurement.
    seed : int
    params : ParamSet, optional
        Override the estimator's own constants (detector tests).
    curvature_scale : float
        Multiplies the curvature constant; 1.0 means "as certified". A
        deliberately undersized scale must make the check fail.

    Returns
    -------
    AssumptionReport
    """
    if samples < 10_000:
        raise ValueError("assumption check needs at least 1e4 samples")
    if params is None:
        params = est.param_set(ref)
    if curvature_scale != 1.0:
        params = replace(params,
                         curvature=params.curvature * curvature_scale)
    rng = np.random.default_rng(seed)
    radii = np.geomspace(1e-2, 5.0, n_states)
    states = []
    for idx in range(n_states):
        warmup = idx % 6
        x = make_state(est, ref, rng, float(radii[idx]), warmup,
                       seed_base=seed)
        sigma_cur = est.sigma_sq(ref)
        breg = est.problem.bregman(x, ref.x_star)
        dev_sq, sigma_next = moment_samples(est, x, ref, samples, rng)

        lhs6 = float(dev_sq.mean())
        se6 = float(dev_sq.std(ddof=1)) / math.sqrt(samples)
        rhs6 = 2.0 * params.curvature * breg \
            + params.state_weight * sigma_cur + params.grad_noise
        lhs7 = float(sigma_next.mean())
        se7 = float(sigma_next.std(ddof=1)) / math.sqrt(samples)
        rhs7 = (1.0 - params.state_decay) * sigma_cur \
            + 2.0 * params.state_curvature * breg + params.state_noise
        states.append(StateCheck(
            radius=float(radii[idx]), warmup=warmup,
            lhs_moment=lhs6, rhs_moment=rhs6, slack_moment=4.0 * se6,
            ok_moment=lhs6 <= rhs6 + 4.0 * se6,
            lhs_state=lhs7, rhs_state=rhs7, slack_state=4.0 * se7,
            ok_state=lhs7 <= rhs7 + 4.0 * se7))
    return AssumptionReport(method=est.method_id, params=params,
                            samples=int(samples), states=tuple(states))
