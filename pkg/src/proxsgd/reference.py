"""High-accuracy reference solutions.

Every diagnostic (distance, f-gap, variance anchors) is measured against the
minimizer produced here: deterministic full-gradient proximal descent with
stepsize 1/L, run until the gradient-mapping residual ||x_k - x_{k-1}||/gamma
falls below 1e-13 * max(1, ||x_k||).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .problems import Problem


class ReferenceError(RuntimeError):
    """Raised when the reference solve does not reach its tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass
class ReferenceSolution:
    """Minimizer of f + R with the per-component gradients frozen at it.

    Attributes
    ----------
    x_star : ndarray (d,)
    f_star : float
        Smooth-part value at x_star.
    star_grads : ndarray (n, d)
        All component gradients at x_star.
    grad_star : ndarray (d,)
        Full smooth gradient at x_star (zero only when R is zero).
    sigma_sq_uniform : float
        E||g||^2 at x_star for uniform serial sampling, (1/n) sum ||grad_i||^2.
    grad_norm_star : float
    iterations : int
    """

    x_star: np.ndarray
    f_star: float
    star_grads: np.ndarray
    grad_star: np.ndarray
    sigma_sq_uniform: float
    grad_norm_star: float
    iterations: int
    _dist_cache: dict = field(default_factory=dict, repr=False)

    def dist_sq(self, x: np.ndarray) -> float:
        diff = x - self.x_star
        return float(diff @ diff)

    def sigma_sq_serial(self, p: np.ndarray) -> float:
        """E||g||^2 at x_star under serial sampling with probabilities p,
        where g = grad_i / (n p_i)."""
        p = np.asarray(p, dtype=np.float64)
        sq = np.einsum("ij,ij->i", self.star_grads, self.star_grads)
        n = self.star_grads.shape[0]
        return float(np.sum(sq / p)) / (n * n)


def solve_reference(problem: Problem, x0=None, max_iter: int = 2_000_000,
                    tol: float = 1e-13) -> ReferenceSolution:
    """Solve min f + R by proximal gradient descent at stepsize 1/L.

    Raises
    ------
    ReferenceError
        If the gradient-mapping residual has not met the tolerance within
        ``max_iter`` iterations.
    ValueError
        If the problem declares no strong convexity (mu <= 0): the minimizer
        is then not certifiably unique and the diagnostics downstream would
        be ill-founded.
    """
    if problem.mu <= 0:
        raise ValueError("solve_reference requires mu > 0 (unique minimizer)")
    gamma = 1.0 / problem.L
    x = np.zeros(problem.d) if x0 is None else np.array(x0, dtype=np.float64)
    residual = np.inf
    for k in range(1, max_iter + 1):
        x_new = problem.regularizer.prox(gamma, x - gamma * problem.grad(x))
        residual = float(np.linalg.norm(x_new - x)) / gamma
        x = x_new
        if residual < tol * max(1.0, float(np.linalg.norm(x))):
            break
    else:
        raise ReferenceError("reference solve did not converge", residual)

    star_grads = problem.grads_at(x)
    grad_star = star_grads.mean(axis=0)
    sq = np.einsum("ij,ij->i", star_grads, star_grads)
    return ReferenceSolution(
        x_star=x,
        f_star=problem.value(x),
        star_grads=star_grads,
        grad_star=grad_star,
        sigma_sq_uniform=float(sq.mean()),
        grad_norm_star=float(np.linalg.norm(grad_star)),
        iterations=k,
    )
