"""Finite-sum objectives, proximal regularizers, and gradient oracles.

A problem is  f(x) = (1/n) sum_i f_i(x)  plus a proximable regularizer R.
Two component families are provided:

* least squares       f_i(x) = 0.5*(a_i^T x - b_i)^2 + (lam/2)*||x||^2
* logistic loss       f_i(x) = log(1 + exp(b_i * a_i^T x)) + (lam/2)*||x||^2

The l2 term is split evenly across the components (it lives in the smooth
part, not in R), so every component gradient carries ``lam*x`` and the
component smoothness constants are ``||a_i||^2 + lam`` (least squares) and
``||a_i||^2/4 + lam`` (logistic).  The ``regularizer`` slot is reserved for
genuinely nonsmooth terms: nothing, an extra quadratic handled in closed form
by its prox, or a Euclidean-ball indicator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


# ----------------------------------------------------------------------------
# regularizers
# ----------------------------------------------------------------------------

class Regularizer:
    """Proximable regularizer: one of ``zero``, ``l2(lam)``, ``ball(radius)``.

    ``prox(gamma, x)`` returns the exact minimizer of
    ``gamma*R(u) + 0.5*||u - x||^2``.
    """

    def __init__(self, kind: str = "zero", lam: float = 0.0, radius: float = 1.0):
        if kind not in ("zero", "l2", "ball"):
            raise ValueError(f"unknown regularizer kind {kind!r}")
        if kind == "l2" and lam < 0:
            raise ValueError("l2 regularizer needs lam >= 0")
        if kind == "ball" and radius <= 0:
            raise ValueError("ball regularizer needs radius > 0")
        self.kind = kind
        self.lam = float(lam)
        self.radius = float(radius)

    def prox(self, gamma: float, x: np.ndarray) -> np.ndarray:
        if self.kind == "zero":
            return x
        if self.kind == "l2":
            return x / (1.0 + gamma * self.lam)
        nrm = float(np.linalg.norm(x))
        if nrm <= self.radius:
            return x
        return x * (self.radius / nrm)

    def value(self, x: np.ndarray) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "l2":
            return 0.5 * self.lam * float(x @ x)
        return 0.0 if np.linalg.norm(x) <= self.radius * (1 + 1e-12) else np.inf

    def __repr__(self):
        if self.kind == "l2":
            return f"Regularizer(l2, lam={self.lam})"
        if self.kind == "ball":
            return f"Regularizer(ball, radius={self.radius})"
        return "Regularizer(zero)"


def zero_reg() -> Regularizer:
    return Regularizer("zero")


def l2_reg(lam: float) -> Regularizer:
    return Regularizer("l2", lam=lam)


def ball_reg(radius: float = 1.0) -> Regularizer:
    return Regularizer("ball", radius=radius)


# ----------------------------------------------------------------------------
# smooth finite sums
# ----------------------------------------------------------------------------

def _softplus(z: np.ndarray) -> np.ndarray:
    # overflow-safe log(1+exp(z))
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z > 0
    out[pos] = z[pos] + np.log1p(np.exp(-z[pos]))
    out[~pos] = np.log1p(np.exp(z[~pos]))
    return out


def _sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class Problem:
    """Finite-sum objective over a dense data matrix.

    Parameters
    ----------
    kind : {"least_squares", "logistic"}
    A : ndarray, shape (n, d)
        Feature rows.
    b : ndarray, shape (n,)
        Targets (least squares) or labels in {-1, +1} (logistic).
    lam : float
        l2 weight split evenly across components (part of the smooth sum).
    regularizer : Regularizer, optional
        Nonsmooth term handled by the prox step; defaults to zero.
    mu : float, optional
        Strong-convexity modulus override.  By default least squares uses the
        exact value lam_min(A^T A)/n + lam and logistic uses the conservative
        lam.

    Notes
    -----
    Component smoothness constants ``L_i`` are certified upper bounds:
    ``||a_i||^2 + lam`` for least squares and ``||a_i||^2/4 + lam`` for
    logistic.  The global ``L`` is ``max_i L_i``.
    """

    def __init__(self, kind, A, b, lam=0.0, regularizer=None, mu=None):
        if kind not in ("least_squares", "logistic"):
            raise ValueError(f"unknown problem kind {kind!r}")
        A = np.ascontiguousarray(A, dtype=np.float64)
        b = np.ascontiguousarray(b, dtype=np.float64)
        if A.ndim != 2 or b.shape != (A.shape[0],):
            raise ValueError("A must be (n, d) and b must be (n,)")
        if kind == "logistic" and not np.all(np.isin(b, (-1.0, 1.0))):
            raise ValueError("logistic labels must be in {-1, +1}")
        self.kind = kind
        self.A = A
        self.b = b
        self.lam = float(lam)
        self.regularizer = regularizer if regularizer is not None else zero_reg()
        self.n, self.d = A.shape
        row_sq = np.einsum("ij,ij->i", A, A)
        if kind == "least_squares":
            self.L_i = row_sq + self.lam
        else:
            self.L_i = 0.25 * row_sq + self.lam
        self.L = float(self.L_i.max())
        evals = np.linalg.eigvalsh(A.T @ A)
        curv = 1.0 if kind == "least_squares" else 0.25
        self.L_f = curv * float(evals[-1]) / self.n + self.lam
        if mu is not None:
            self.mu = float(mu)
        elif kind == "least_squares":
            self.mu = max(float(evals[0]), 0.0) / self.n + self.lam
        else:
            self.mu = self.lam

    # -- full objective ------------------------------------------------------

    def value(self, x: np.ndarray) -> float:
        z = self.A @ x
        if self.kind == "least_squares":
            loss = 0.5 * float(np.mean((z - self.b) ** 2))
        else:
            loss = float(np.mean(_softplus(self.b * z)))
        return loss + 0.5 * self.lam * float(x @ x)

    def grad(self, x: np.ndarray) -> np.ndarray:
        z = self.A @ x
        if self.kind == "least_squares":
            w = z - self.b
        else:
            w = self.b * _sigmoid(self.b * z)
        return self.A.T @ w / self.n + self.lam * x

    def partial(self, j: int, x: np.ndarray) -> float:
        """Coordinate j of the full gradient."""
        z = self.A @ x
        if self.kind == "least_squares":
            w = z - self.b
        else:
            w = self.b * _sigmoid(self.b * z)
        return float(self.A[:, j] @ w) / self.n + self.lam * x[j]

    # -- component oracles ---------------------------------------------------

    def value_i(self, i: int, x: np.ndarray) -> float:
        z = float(self.A[i] @ x)
        if self.kind == "least_squares":
            loss = 0.5 * (z - self.b[i]) ** 2
        else:
            loss = float(_softplus(np.array(self.b[i] * z)))
        return loss + 0.5 * self.lam * float(x @ x)

    def grad_i(self, i: int, x: np.ndarray) -> np.ndarray:
        z = float(self.A[i] @ x)
        if self.kind == "least_squares":
            w = z - self.b[i]
        else:
            w = self.b[i] * float(_sigmoid(np.array(self.b[i] * z)))
        return w * self.A[i] + self.lam * x

    def grads_at(self, x: np.ndarray, rows=None) -> np.ndarray:
        """All (or selected) component gradients at x, stacked (len, d)."""
        A = self.A if rows is None else self.A[rows]
        b = self.b if rows is None else self.b[rows]
        z = A @ x
        if self.kind == "least_squares":
            w = z - b
        else:
            w = b * _sigmoid(b * z)
        return w[:, None] * A + self.lam * x

    def bregman(self, x: np.ndarray, y: np.ndarray) -> float:
        """f(x) - f(y) - <grad f(y), x - y>  (smooth part only)."""
        return self.value(x) - self.value(y) - float(self.grad(y) @ (x - y))

    def block_smoothness(self, rows) -> float:
        """Smoothness constant of the sub-average (1/|rows|) sum of the
        selected components: exact for least squares, the 1/4-curvature
        bound for logistic."""
        Ar = self.A[rows]
        evals = np.linalg.eigvalsh(Ar.T @ Ar)
        curv = 1.0 if self.kind == "least_squares" else 0.25
        return curv * float(evals[-1]) / len(rows) + self.lam

    def __repr__(self):
        return (f"Problem({self.kind}, n={self.n}, d={self.d}, lam={self.lam}, "
                f"reg={self.regularizer!r})")


def bregman(problem: Problem, x: np.ndarray, y: np.ndarray) -> float:
    return problem.bregman(x, y)


def make_least_squares(A, b, lam=0.0, regularizer=None, mu=None) -> Problem:
    return Problem("least_squares", A, b, lam=lam, regularizer=regularizer, mu=mu)


def make_logistic(A, labels, lam=0.0, regularizer=None, mu=None) -> Problem:
    return Problem("logistic", A, labels, lam=lam, regularizer=regularizer, mu=mu)


# ----------------------------------------------------------------------------
# noisy oracles
# ----------------------------------------------------------------------------

@dataclass
class NoisyOracle:
    """Unbiased noisy view of a problem's component oracles.

    ``full`` mode returns ``grad_i + zeta`` with ``zeta ~ N(0, (sigma_sq/d) I)``
    so that ``E||zeta||^2 = sigma_sq`` exactly; ``partial`` mode returns the
    scalar ``partial_j + zeta`` with ``zeta ~ N(0, sigma_sq/d)``.  Both meet
    their advertised second-moment bounds with equality, which keeps the
    noise-floor predictions sharp.
    """

    base: Problem
    sigma_sq: float
    mode: str = "full"  # "full" | "partial"

    def __post_init__(self):
        if self.mode not in ("full", "partial"):
            raise ValueError(f"unknown noise mode {self.mode!r}")
        if self.sigma_sq < 0:
            raise ValueError("sigma_sq must be >= 0")
        self._scale_full = np.sqrt(self.sigma_sq / self.base.d)
        self._scale_partial = np.sqrt(self.sigma_sq / self.base.d)

    def grad_i(self, i: int, x: np.ndarray, noise_rng) -> np.ndarray:
        if self.mode != "full":
            raise ValueError("grad_i requires full-gradient noise mode")
        g = self.base.grad_i(i, x)
        if self.sigma_sq > 0:
            g = g + self._scale_full * noise_rng.standard_normal(self.base.d)
        return g

    def partial(self, j: int, x: np.ndarray, noise_rng) -> float:
        if self.mode != "partial":
            raise ValueError("partial requires partial-derivative noise mode")
        p = self.base.partial(j, x)
        if self.sigma_sq > 0:
            p = p + self._scale_partial * float(noise_rng.standard_normal())
        return p
