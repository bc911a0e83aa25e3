"""Objectives: gradients vs finite differences, certified constants,
proximal operators, and the noisy oracles."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from proxsgd.problems import (NoisyOracle, Problem, ball_reg, bregman,
                              l2_reg, make_least_squares, make_logistic,
                              zero_reg)


def small_least_squares(n=8, d=5, lam=0.1, seed=42):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, d))
    b = rng.standard_normal(n)
    return make_least_squares(A, b, lam=lam)


def small_logistic(n=8, d=5, lam=0.1, seed=42):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, d))
    labels = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    return make_logistic(A, labels, lam=lam)


def numeric_grad(fun, x, h=1e-6):
    g = np.zeros_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


class TestGradients:
    @pytest.mark.parametrize("build", [small_least_squares, small_logistic])
    def test_full_gradient_matches_finite_differences(self, build):
        problem = build()
        rng = np.random.default_rng(42)
        for _ in range(3):
            x = rng.standard_normal(problem.d)
            assert_allclose(problem.grad(x), numeric_grad(problem.value, x),
                            rtol=1e-6, atol=1e-8)

    @pytest.mark.parametrize("build", [small_least_squares, small_logistic])
    def test_component_gradient_matches_finite_differences(self, build):
        problem = build()
        rng = np.random.default_rng(42)
        x = rng.standard_normal(problem.d)
        for i in (0, problem.n - 1):
            want = numeric_grad(lambda z: problem.value_i(i, z), x)
            assert_allclose(problem.grad_i(i, x), want, rtol=1e-6, atol=1e-8)

    @pytest.mark.parametrize("build", [small_least_squares, small_logistic])
    def test_full_gradient_is_component_mean(self, build):
        problem = build()
        x = np.random.default_rng(42).standard_normal(problem.d)
        stacked = np.stack([problem.grad_i(i, x) for i in range(problem.n)])
        assert_allclose(problem.grad(x), stacked.mean(axis=0), rtol=1e-12)

    @pytest.mark.parametrize("build", [small_least_squares, small_logistic])
    def test_grads_at_matches_row_loop(self, build):
        problem = build()
        x = np.random.default_rng(42).standard_normal(problem.d)
        stacked = np.stack([problem.grad_i(i, x) for i in range(problem.n)])
        assert_allclose(problem.grads_at(x), stacked, rtol=1e-13)
        rows = np.array([2, 0, 5])
        assert_allclose(problem.grads_at(x, rows=rows), stacked[rows],
                        rtol=1e-13)

    @pytest.mark.parametrize("build", [small_least_squares, small_logistic])
    def test_partial_is_gradient_coordinate(self, build):
        problem = build()
        x = np.random.default_rng(42).standard_normal(problem.d)
        g = problem.grad(x)
        for j in range(problem.d):
            assert_allclose(problem.partial(j, x), g[j], rtol=1e-12,
                            err_msg=f"coordinate {j}")

    def test_value_is_mean_of_components(self):
        problem = small_least_squares()
        x = np.random.default_rng(42).standard_normal(problem.d)
        vals = [problem.value_i(i, x) for i in range(problem.n)]
        assert_allclose(problem.value(x), np.mean(vals), rtol=1e-12)


class TestConstants:
    def test_least_squares_component_smoothness(self):
        problem = small_least_squares(lam=0.3)
        want = np.einsum("ij,ij->i", problem.A, problem.A) + 0.3
        assert_allclose(problem.L_i, want, rtol=1e-15)
        assert problem.L == pytest.approx(want.max(), rel=1e-15)

    def test_least_squares_full_smoothness_is_exact(self):
        problem = small_least_squares(lam=0.3)
        H = problem.A.T @ problem.A / problem.n + 0.3 * np.eye(problem.d)
        assert_allclose(problem.L_f, np.linalg.eigvalsh(H)[-1], rtol=1e-10)

    def test_least_squares_mu_is_exact(self):
        problem = small_least_squares(lam=0.3)
        H = problem.A.T @ problem.A / problem.n + 0.3 * np.eye(problem.d)
        assert_allclose(problem.mu, np.linalg.eigvalsh(H)[0], rtol=1e-10)

    def test_logistic_constants_bound_the_hessians(self):
        problem = small_logistic(lam=0.2)
        rng = np.random.default_rng(42)
        for _ in range(3):
            x = rng.standard_normal(problem.d)
            z = problem.A @ x
            s = 1.0 / (1.0 + np.exp(-z))
            curv = s * (1 - s)  # component curvature along a_i
            hess_i = curv[:, None, None] * np.einsum(
                "ij,ik->ijk", problem.A, problem.A) \
                + 0.2 * np.eye(problem.d)
            for i in range(problem.n):
                top = np.linalg.eigvalsh(hess_i[i])[-1]
                assert top <= problem.L_i[i] * (1 + 1e-12), \
                    f"component {i}: hessian {top} above L_i {problem.L_i[i]}"

    def test_logistic_default_mu_is_ridge_weight(self):
        assert small_logistic(lam=0.25).mu == 0.25

    def test_mu_override(self):
        problem = small_least_squares()
        forced = Problem("least_squares", problem.A, problem.b, lam=0.1,
                         mu=0.05)
        assert forced.mu == 0.05

    @pytest.mark.parametrize("build", [small_least_squares, small_logistic])
    def test_bregman_between_mu_and_smoothness(self, build):
        problem = build()
        rng = np.random.default_rng(42)
        for _ in range(10):
            x = rng.standard_normal(problem.d)
            y = rng.standard_normal(problem.d)
            div = problem.bregman(x, y)
            dist = float((x - y) @ (x - y))
            assert div >= 0.5 * problem.mu * dist * (1 - 1e-9), \
                f"bregman {div} below curvature floor"
            assert div <= 0.5 * problem.L_f * dist * (1 + 1e-9), \
                f"bregman {div} above smoothness ceiling"

    def test_bregman_helper_matches_method(self):
        problem = small_least_squares()
        rng = np.random.default_rng(42)
        x, y = rng.standard_normal((2, problem.d))
        assert bregman(problem, x, y) == problem.bregman(x, y)

    def test_block_smoothness(self):
        problem = small_least_squares(lam=0.3)
        rows = np.array([0, 2, 3])
        H = problem.A[rows].T @ problem.A[rows] / 3 + 0.3 * np.eye(problem.d)
        assert_allclose(problem.block_smoothness(rows),
                        np.linalg.eigvalsh(H)[-1], rtol=1e-10)
        full = problem.block_smoothness(np.arange(problem.n))
        assert_allclose(full, problem.L_f, rtol=1e-12)


class TestValidation:
    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown problem kind"):
            Problem("huber", np.eye(2), np.zeros(2))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match=r"\(n, d\)"):
            Problem("least_squares", np.eye(3), np.zeros(2))

    def test_logistic_labels_must_be_signs(self):
        with pytest.raises(ValueError, match="labels"):
            make_logistic(np.eye(2), np.array([1.0, 0.5]))


class TestRegularizer:
    def test_zero_prox_is_identity(self):
        x = np.array([3.0, -1.0])
        assert_array_equal(zero_reg().prox(0.7, x), x)
        assert zero_reg().value(x) == 0.0

    def test_l2_prox_shrinks(self):
        reg = l2_reg(2.0)
        x = np.array([3.0, -1.0, 0.5])
        got = reg.prox(0.25, x)
        assert_allclose(got, x / 1.5, rtol=1e-15)
        # optimality: gradient of gamma*R + 0.5||u - x||^2 vanishes
        assert_allclose(0.25 * 2.0 * got + got - x, 0.0, atol=1e-15)
        assert reg.value(x) == pytest.approx(0.5 * 2.0 * float(x @ x))

    def test_ball_prox_projects(self):
        reg = ball_reg(2.0)
        inside = np.array([1.0, 0.5])
        assert_array_equal(reg.prox(0.3, inside), inside)
        outside = np.array([3.0, 4.0])
        got = reg.prox(0.3, outside)
        assert_allclose(np.linalg.norm(got), 2.0, rtol=1e-15)
        assert_allclose(got, outside * (2.0 / 5.0), rtol=1e-15)
        assert reg.value(inside) == 0.0
        assert reg.value(outside) == np.inf

    def test_ball_prox_ignores_gamma(self):
        reg = ball_reg(1.0)
        x = np.array([0.0, 3.0])
        assert_array_equal(reg.prox(0.1, x), reg.prox(100.0, x))

    @pytest.mark.parametrize("kind, kwargs, match", [
        ("soft", {}, "unknown regularizer"),
        ("l2", {"lam": -1.0}, "lam >= 0"),
        ("ball", {"radius": 0.0}, "radius > 0"),
    ])
    def test_validation(self, kind, kwargs, match):
        from proxsgd.problems import Regularizer
        with pytest.raises(ValueError, match=match):
            Regularizer(kind, **kwargs)


class TestNoisyOracle:
    def test_full_mode_mean_and_variance(self):
        problem = small_least_squares()
        oracle = NoisyOracle(problem, sigma_sq=0.5, mode="full")
        rng = np.random.default_rng(42)
        x = rng.standard_normal(problem.d)
        clean = problem.grad_i(3, x)
        samples = np.stack([oracle.grad_i(3, x, rng) for _ in range(20_000)])
        noise = samples - clean
        sq = np.einsum("ij,ij->i", noise, noise)
        se_mean = noise.std(ddof=1) / np.sqrt(noise.size)
        assert np.all(np.abs(noise.mean(axis=0)) < 4 * se_mean * 3), \
            "noise mean is not centered"
        se_sq = sq.std(ddof=1) / np.sqrt(sq.size)
        assert abs(sq.mean() - 0.5) < 4 * se_sq, \
            f"second moment {sq.mean()} vs advertised 0.5"

    def test_partial_mode_variance(self):
        problem = small_least_squares()
        oracle = NoisyOracle(problem, sigma_sq=0.8, mode="partial")
        rng = np.random.default_rng(42)
        x = rng.standard_normal(problem.d)
        clean = problem.partial(2, x)
        draws = np.array([oracle.partial(2, x, rng) for _ in range(20_000)])
        var = (draws - clean) ** 2
        se = var.std(ddof=1) / np.sqrt(var.size)
        assert abs(var.mean() - 0.8 / problem.d) < 4 * se

    def test_zero_noise_consumes_no_draws(self):
        problem = small_least_squares()
        oracle = NoisyOracle(problem, sigma_sq=0.0, mode="full")
        used = np.random.default_rng(0)
        x = np.ones(problem.d)
        got = oracle.grad_i(1, x, used)
        assert_array_equal(got, problem.grad_i(1, x))
        assert used.random() == np.random.default_rng(0).random(), \
            "generator advanced despite zero noise"

    def test_mode_validation(self):
        problem = small_least_squares()
        with pytest.raises(ValueError, match="unknown noise mode"):
            NoisyOracle(problem, sigma_sq=0.1, mode="fuzzy")
        with pytest.raises(ValueError, match="sigma_sq"):
            NoisyOracle(problem, sigma_sq=-0.1)
        full = NoisyOracle(problem, sigma_sq=0.1, mode="full")
        with pytest.raises(ValueError, match="partial"):
            full.partial(0, np.ones(problem.d), np.random.default_rng(0))
        part = NoisyOracle(problem, sigma_sq=0.1, mode="partial")
        with pytest.raises(ValueError, match="full"):
            part.grad_i(0, np.ones(problem.d), np.random.default_rng(0))
