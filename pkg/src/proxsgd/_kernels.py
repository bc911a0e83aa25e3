"""Compiled iteration kernels for the serial-sampling estimators.

Each kernel runs the full proximal loop for one (method, problem-kind) pair
with every random draw pre-generated, so a kernel run consumes the per-stream
draw sequences in exactly the order the per-step python loop would (numpy
array draws equal repeated scalar draws from the same generator).  The driver
owns backend selection; these functions only do arithmetic.

Kernels record the iterate (and the estimator's state variance when reference
data is supplied) on a fixed iteration grid and return the final state so the
caller can write it back into the estimator object.  Status is 0 on success,
or 1 + the step index at which the iterate went non-finite or its norm passed
the divergence guard.

With numba unavailable the same functions run as plain python; the driver
never routes long loops here in that case, but the behavior is identical.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn
        return wrap

DIVERGENCE_SQ = 1e24  # ||x||^2 guard, i.e. ||x|| > 1e12


@njit(cache=True)
def _bisect_right(cum, u):
    lo = 0
    hi = cum.shape[0]
    while lo < hi:
        mid = (lo + hi) // 2
        if cum[mid] <= u:
            lo = mid + 1
        else:
            hi = mid
    if lo >= cum.shape[0]:
        lo = cum.shape[0] - 1
    return lo


@njit(cache=True)
def _floor_index(u, n):
    i = int(u * n)
    if i >= n:
        i = n - 1
    return i


@njit(cache=True)
def _w_at(kind, A, b, lam, i, x):
    """Scalar w with grad f_i(x) = w * a_i + lam * x."""
    z = 0.0
    for j in range(A.shape[1]):
        z += A[i, j] * x[j]
    if kind == 0:  # least squares
        return z - b[i]
    t = b[i] * z
    if t >= 0.0:
        s = 1.0 / (1.0 + math.exp(-t))
    else:
        e = math.exp(t)
        s = e / (1.0 + e)
    return b[i] * s


@njit(cache=True)
def _prox_inplace(reg_kind, reg_lam, reg_radius, gamma, v):
    if reg_kind == 1:  # l2
        c = 1.0 / (1.0 + gamma * reg_lam)
        for j in range(v.shape[0]):
            v[j] *= c
    elif reg_kind == 2:  # ball
        sq = 0.0
        for j in range(v.shape[0]):
            sq += v[j] * v[j]
        nrm = math.sqrt(sq)
        if nrm > reg_radius:
            c = reg_radius / nrm
            for j in range(v.shape[0]):
                v[j] *= c


@njit(cache=True)
def _norm_sq(v):
    sq = 0.0
    for j in range(v.shape[0]):
        sq += v[j] * v[j]
    return sq


@njit(cache=True)
def k_sgd(kind, A, b, lam, reg_kind, reg_lam, reg_radius, gamma,
          rec, x0, u, cum, scale):
    d = A.shape[1]
    iters = u.shape[0]
    x = x0.copy()
    g = np.zeros(d)
    X_rec = np.zeros((rec.shape[0], d))
    ptr = 0
    if rec[ptr] == 0:
        X_rec[ptr] = x
        ptr += 1
    for k in range(1, iters + 1):
        i = _bisect_right(cum, u[k - 1])
        w = _w_at(kind, A, b, lam, i, x)
        for j in range(d):
            g[j] = scale[i] * (w * A[i, j] + lam * x[j])
        for j in range(d):
            x[j] = x[j] - gamma * g[j]
        _prox_inplace(reg_kind, reg_lam, reg_radius, gamma, x)
        sq = _norm_sq(x)
        if not (sq <= DIVERGENCE_SQ):
            return x, X_rec, 1 + (k - 1), _norm_sq(g)
        if ptr < rec.shape[0] and rec[ptr] == k:
            X_rec[ptr] = x
            ptr += 1
    return x, X_rec, 0, 0.0


@njit(cache=True)
def k_sgd_star(kind, A, b, lam, reg_kind, reg_lam, reg_radius, gamma,
               rec, x0, u, cum, scale, star_grads, grad_star):
    d = A.shape[1]
    iters = u.shape[0]
    x = x0.copy()
    g = np.zeros(d)
    X_rec = np.zeros((rec.shape[0], d))
    ptr = 0
    if rec[ptr] == 0:
        X_rec[ptr] = x
        ptr += 1
    for k in range(1, iters + 1):
        i = _bisect_right(cum, u[k - 1])
        w = _w_at(kind, A, b, lam, i, x)
        for j in range(d):
            g[j] = scale[i] * ((w * A[i, j] + lam * x[j])
                               - star_grads[i, j]) + grad_star[j]
        for j in range(d):
            x[j] = x[j] - gamma * g[j]
        _prox_inplace(reg_kind, reg_lam, reg_radius, gamma, x)
        sq = _norm_sq(x)
        if not (sq <= DIVERGENCE_SQ):
            return x, X_rec, 1 + (k - 1), _norm_sq(g)
        if ptr < rec.shape[0] and rec[ptr] == k:
            X_rec[ptr] = x
            ptr += 1
    return x, X_rec, 0, 0.0


@njit(cache=True)
def k_sgd_mb(kind, A, b, lam, reg_kind, reg_lam, reg_radius, gamma,
             rec, x0, U, cum, scale):
    d = A.shape[1]
    iters = U.shape[0]
    tau = U.shape[1]
    x = x0.copy()
    g = np.zeros(d)
    X_rec = np.zeros((rec.shape[0], d))
    ptr = 0
    if rec[ptr] == 0:
        X_rec[ptr] = x
        ptr += 1
    for k in range(1, iters + 1):
        for j in range(d):
            g[j] = 0.0
        for t in range(tau):
            i = _bisect_right(cum, U[k - 1, t])
            w = _w_at(kind, A, b, lam, i, x)
            for j in range(d):
                g[j] += scale[i] * (w * A[i, j] + lam * x[j])
        for j in range(d):
            g[j] /= tau
        for j in range(d):
            x[j] = x[j] - gamma * g[j]
        _prox_inplace(reg_kind, reg_lam, reg_radius, gamma, x)
        sq = _norm_sq(x)
        if not (sq <= DIVERGENCE_SQ):
            return x, X_rec, 1 + (k - 1), _norm_sq(g)
        if ptr < rec.shape[0] and rec[ptr] == k:
            X_rec[ptr] = x
            ptr += 1
    return x, X_rec, 0, 0.0


@njit(cache=True)
def k_sgd_ind(kind, A, b, lam, reg_kind, reg_lam, reg_radius, gamma,
              rec, x0, U, q):
    n, d = A.shape
    iters = U.shape[0]
    x = x0.copy()
    g = np.zeros(d)
    X_rec = np.zeros((rec.shape[0], d))
    ptr = 0
    if rec[ptr] == 0:
        X_rec[ptr] = x
        ptr += 1
    for k in range(1, iters + 1):
        for j in range(d):
            g[j] = 0.0
        for i in range(n):
            if U[k - 1, i] < q[i]:
                w = _w_at(kind, A, b, lam, i, x)
                c = 1.0 / (q[i] * n)
                for j in range(d):
                    g[j] += c * (w * A[i, j] + lam * x[j])
        for j in range(d):
            x[j] = x[j] - gamma * g[j]
        _prox_inplace(reg_kind, reg_lam, reg_radius, gamma, x)
        sq = _norm_sq(x)
        if not (sq <= DIVERGENCE_SQ):
            return x, X_rec, 1 + (k - 1), _norm_sq(g)
        if ptr < rec.shape[0] and rec[ptr] == k:
            X_rec[ptr] = x
            ptr += 1
    return x, X_rec, 0, 0.0


@njit(cache=True)
def k_saga(kind, A, b, lam, reg_kind, reg_lam, reg_radius, gamma,
           rec, x0, u, table, avg, steps0, star_grads, has_star):
    n, d = A.shape
    iters = u.shape[0]
    x = x0.copy()
    g = np.zeros(d)
    fresh = np.zeros(d)
    X_rec = np.zeros((rec.shape[0], d))
    sig_rec = np.full(rec.shape[0], np.nan)
    steps = steps0
    ptr = 0

    if rec[ptr] == 0:
        X_rec[ptr] = x
        if has_star:
            acc = 0.0
            for i in range(n):
                for j in range(d):
                    diff = table[i, j] - star_grads[i, j]
                    acc += diff * diff
            sig_rec[ptr] = acc / n
        ptr += 1

    for k in range(1, iters + 1):
        jj = _floor_index(u[k - 1], n)
        w = _w_at(kind, A, b, lam, jj, x)
        for j in range(d):
            fresh[j] = w * A[jj, j] + lam * x[j]
        for j in range(d):
            diff = fresh[j] - table[jj, j]
            g[j] = diff + avg[j]
            avg[j] = avg[j] + diff / n
            table[jj, j] = fresh[j]
        steps += 1
        if steps % n == 0:
            for j in range(d):
                acc = 0.0
                for i in range(n):
                    acc += table[i, j]
                avg[j] = acc / n
        for j in range(d):
            x[j] = x[j] - gamma * g[j]
        _prox_inplace(reg_kind, reg_lam, reg_radius, gamma, x)
        sq = _norm_sq(x)
        if not (sq <= DIVERGENCE_SQ):
            return x, X_rec, sig_rec, table, avg, steps, 1 + (k - 1), \
                _norm_sq(g)
        if ptr < rec.shape[0] and rec[ptr] == k:
            X_rec[ptr] = x
            if has_star:
                acc = 0.0
                for i in range(n):
                    for j in range(d):
                        diff = table[i, j] - star_grads[i, j]
                        acc += diff * diff
                sig_rec[ptr] = acc / n
            ptr += 1
    return x, X_rec, sig_rec, table, avg, steps, 0, 0.0


@njit(cache=True)
def k_lsvrg(kind, A, b, lam, reg_kind, reg_lam, reg_radius, gamma,
            rec, x0, u, cu, p, anchor, full_grad, star_grads, has_star):
    n, d = A.shape
    iters = u.shape[0]
    x = x0.copy()
    g = np.zeros(d)
    X_rec = np.zeros((rec.shape[0], d))
    sig_rec = np.full(rec.shape[0], np.nan)
    ptr = 0

    if rec[ptr] == 0:
        X_rec[ptr] = x
        if has_star:
            acc = 0.0
            for i in range(n):
                w = _w_at(kind, A, b, lam, i, anchor)
                for j in range(d):
                    diff = (w * A[i, j] + lam * anchor[j]) - star_grads[i, j]
                    acc += diff * diff
            sig_rec[ptr] = acc / n
        ptr += 1

    for k in range(1, iters + 1):
        i = _floor_index(u[k - 1], n)
        wx = _w_at(kind, A, b, lam, i, x)
        wa = _w_at(kind, A, b, lam, i, anchor)
        for j in range(d):
            g[j] = (wx * A[i, j] + lam * x[j]) \
                - (wa * A[i, j] + lam * anchor[j]) + full_grad[j]
        if cu[k - 1] < p:
            for j in range(d):
                anchor[j] = x[j]
                full_grad[j] = 0.0
            for i2 in range(n):
                w2 = _w_at(kind, A, b, lam, i2, anchor)
                for j in range(d):
                    full_grad[j] += w2 * A[i2, j]
            for j in range(d):
                full_grad[j] = full_grad[j] / n + lam * anchor[j]
        for j in range(d):
            x[j] = x[j] - gamma * g[j]
        _prox_inplace(reg_kind, reg_lam, reg_radius, gamma, x)
        sq = _norm_sq(x)
        if not (sq <= DIVERGENCE_SQ):
            return x, X_rec, sig_rec, anchor, full_grad, 1 + (k - 1), \
                _norm_sq(g)
        if ptr < rec.shape[0] and rec[ptr] == k:
            X_rec[ptr] = x
            if has_star:
                acc = 0.0
                for i2 in range(n):
                    w2 = _w_at(kind, A, b, lam, i2, anchor)
                    for j in range(d):
                        diff = (w2 * A[i2, j] + lam * anchor[j]) \
                            - star_grads[i2, j]
                        acc += diff * diff
                sig_rec[ptr] = acc / n
            ptr += 1
    return x, X_rec, sig_rec, anchor, full_grad, 0, 0.0


@njit(cache=True)
def k_sega(kind, A, b, lam, reg_kind, reg_lam, reg_radius, gamma,
           rec, x0, u, h, grad_star, has_star, noise, noise_scale,
           has_noise):
    n, d = A.shape
    iters = u.shape[0]
    x = x0.copy()
    g = np.zeros(d)
    X_rec = np.zeros((rec.shape[0], d))
    sig_rec = np.full(rec.shape[0], np.nan)
    ptr = 0

    if rec[ptr] == 0:
        X_rec[ptr] = x
        if has_star:
            acc = 0.0
            for j in range(d):
                diff = h[j] - grad_star[j]
                acc += diff * diff
            sig_rec[ptr] = acc
        ptr += 1

    for k in range(1, iters + 1):
        c = _floor_index(u[k - 1], d)
        acc = 0.0
        for i in range(n):
            w = _w_at(kind, A, b, lam, i, x)
            acc += A[i, c] * w
        pc = acc / n + lam * x[c]
        if has_noise:
            pc = pc + noise_scale * noise[k - 1]
        for j in range(d):
            g[j] = h[j]
        g[c] = h[c] + d * (pc - h[c])
        h[c] = pc
        for j in range(d):
            x[j] = x[j] - gamma * g[j]
        _prox_inplace(reg_kind, reg_lam, reg_radius, gamma, x)
        sq = _norm_sq(x)
        if not (sq <= DIVERGENCE_SQ):
            return x, X_rec, sig_rec, h, 1 + (k - 1), _norm_sq(g)
        if ptr < rec.shape[0] and rec[ptr] == k:
            X_rec[ptr] = x
            if has_star:
                acc = 0.0
                for j in range(d):
                    diff = h[j] - grad_star[j]
                    acc += diff * diff
                sig_rec[ptr] = acc
            ptr += 1
    return x, X_rec, sig_rec, h, 0, 0.0
