"""The proximal loop: recording grid, trace contracts, determinism, error
guards, and the seed ensemble."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from proxsgd.driver import (DivergenceError, EnsembleTrace, NumericalError,
                            RunConfig, Trace, ensemble, record_grid,
                            resolve_backend, run)
from proxsgd.estimators import LSVRG, SAGA, SEGA, SGD, SVRG
from proxsgd.problems import ball_reg, make_least_squares
from proxsgd.reference import solve_reference
from proxsgd.rng import Streams
from proxsgd.sampling import uniform_dist


def ridge(n=6, d=4, lam=0.3, seed=42, **kwargs):
    rng = np.random.default_rng(seed)
    return make_least_squares(rng.standard_normal((n, d)),
                              rng.standard_normal(n), lam=lam, **kwargs)


def np_config(**kwargs):
    kwargs.setdefault("backend", "numpy")
    return RunConfig(**kwargs)


class TestRunConfig:
    def test_validation(self):
        with pytest.raises(ValueError, match="gamma"):
            RunConfig(gamma=0.0, iters=10)
        with pytest.raises(ValueError, match="iters"):
            RunConfig(gamma=0.1, iters=0)
        with pytest.raises(ValueError, match="record_every"):
            RunConfig(gamma=0.1, iters=10, record_every=0)


class TestRecordGrid:
    def test_short_runs_record_every_step(self):
        assert_array_equal(record_grid(5), [0, 1, 2, 3, 4, 5])

    def test_long_runs_thin_to_about_a_thousand(self):
        grid = record_grid(5000)
        assert grid[0] == 0 and grid[-1] == 5000
        assert np.all(np.diff(grid) == 5)

    def test_final_iteration_always_present(self):
        grid = record_grid(7, record_every=3)
        assert_array_equal(grid, [0, 3, 6, 7])

    def test_explicit_stride(self):
        assert_array_equal(record_grid(10, record_every=5), [0, 5, 10])


class TestResolveBackend:
    problem = ridge()

    def test_numpy_always_available(self):
        est = SGD(self.problem, uniform_dist(self.problem.n))
        assert resolve_backend(est, self.problem, "numpy") == "numpy"

    def test_auto_prefers_kernels_where_they_exist(self):
        est = SGD(self.problem, uniform_dist(self.problem.n))
        assert resolve_backend(est, self.problem, "auto") == "numba"
        assert resolve_backend(SVRG(self.problem, m=5), self.problem,
                               "auto") == "numpy"

    def test_numba_refuses_methods_without_kernels(self):
        with pytest.raises(ValueError, match="no compiled kernel"):
            resolve_backend(SVRG(self.problem, m=5), self.problem, "numba")

    def test_unknown_mode(self):
        est = SGD(self.problem, uniform_dist(self.problem.n))
        with pytest.raises(ValueError, match="unknown backend"):
            resolve_backend(est, self.problem, "fast")

    def test_environment_flag(self, monkeypatch):
        est = SGD(self.problem, uniform_dist(self.problem.n))
        monkeypatch.setenv("PROXSGD_BACKEND", "numpy")
        assert resolve_backend(est, self.problem) == "numpy"
        # an explicit override beats the environment
        assert resolve_backend(est, self.problem, "auto") == "numba"
        monkeypatch.setenv("PROXSGD_BACKEND", "turbo")
        with pytest.raises(ValueError, match="unknown backend"):
            resolve_backend(est, self.problem)


class TestRunContracts:
    def test_same_seed_reproduces_bitwise(self):
        problem = ridge()
        ref = solve_reference(problem)
        cfg = np_config(gamma=0.05, iters=40, seed=9, record_every=4)
        a = run(problem, SAGA(problem), cfg, ref=ref)
        b = run(problem, SAGA(problem), cfg, ref=ref)
        assert_array_equal(a.x_final, b.x_final)
        assert_array_equal(a.dist_sq, b.dist_sq)
        assert_array_equal(a.sigma_sq, b.sigma_sq)
        assert_array_equal(a.lyapunov, b.lyapunov)

    def test_distinct_seeds_differ(self):
        problem = ridge()
        a = run(problem, SAGA(problem), np_config(gamma=0.05, iters=40,
                                                  seed=1))
        b = run(problem, SAGA(problem), np_config(gamma=0.05, iters=40,
                                                  seed=2))
        assert not np.array_equal(a.x_final, b.x_final)

    def test_x0_shape_checked(self):
        problem = ridge()
        est = SGD(problem, uniform_dist(problem.n))
        with pytest.raises(ValueError, match="x0 must have shape"):
            run(problem, est, np_config(gamma=0.05, iters=5,
                                        x0=np.zeros(3)))

    def test_matches_a_manual_loop(self):
        # the driver is exactly prox(x - gamma g) + post_step on the
        # estimator's own stream, recorded on the grid
        problem = ridge()
        ref = solve_reference(problem)
        cfg = np_config(gamma=0.04, iters=7, seed=3, record_every=1)
        trace = run(problem, SVRG(problem, m=2), cfg, ref=ref)

        est = SVRG(problem, m=2)
        x = np.zeros(problem.d)
        est.start(x)
        streams = Streams(3)
        dist = [float(np.sum((x - ref.x_star) ** 2))]
        for _ in range(7):
            g = est.next(x, streams)
            x = problem.regularizer.prox(0.04, x - 0.04 * g)
            x = est.post_step(x)
            dist.append(float(np.sum((x - ref.x_star) ** 2)))
        assert_array_equal(trace.x_final, x)
        # the iterates replay bitwise; the distance diagnostic is summed in
        # a different order (einsum over the stacked matrix), so ulps only
        assert_allclose(trace.dist_sq, dist, rtol=1e-15)

    def test_fixed_point_stays_put(self):
        # b = 0 makes the origin the minimizer with every component gradient
        # zero there, so the trajectory never moves
        rng = np.random.default_rng(0)
        problem = make_least_squares(rng.standard_normal((5, 3)),
                                     np.zeros(5), lam=0.2)
        ref = solve_reference(problem)
        trace = run(problem, SAGA(problem),
                    np_config(gamma=0.05, iters=30, seed=4), ref=ref)
        assert_array_equal(trace.x_final, np.zeros(3))
        assert_array_equal(trace.dist_sq, np.zeros(trace.iters.shape[0]))

    def test_single_component_contraction_closed_form(self):
        # f(x) = x^2/2: the only component gradient is x itself, so the
        # iteration is exactly x <- (1 - gamma) x
        problem = make_least_squares(np.array([[1.0]]), np.array([0.0]),
                                     lam=0.0)
        ref = solve_reference(problem)
        gamma, iters = 0.125, 12
        trace = run(problem, SGD(problem, uniform_dist(1)),
                    np_config(gamma=gamma, iters=iters, x0=np.array([2.0]),
                              record_every=1), ref=ref)
        k = np.arange(iters + 1)
        assert_allclose(trace.dist_sq, (2.0 * (1 - gamma) ** k) ** 2,
                        rtol=1e-12)

    def test_trace_metadata_and_grid(self):
        problem = ridge()
        ref = solve_reference(problem)
        est = SAGA(problem)
        trace = run(problem, est, np_config(gamma=0.05, iters=23, seed=7,
                                            record_every=5), ref=ref)
        assert isinstance(trace, Trace)
        assert trace.method == "saga"
        assert trace.seed == 7
        assert trace.gamma == 0.05
        assert trace.backend == "numpy"
        assert trace.weight == 4.0 * problem.n
        assert_array_equal(trace.iters, [0, 5, 10, 15, 20, 23])
        assert np.all(np.diff(trace.iters) > 0)
        for field in ("dist_sq", "f_gap", "sigma_sq", "lyapunov"):
            assert np.all(np.isfinite(getattr(trace, field))), field

    def test_without_reference_only_iterates(self):
        problem = ridge()
        trace = run(problem, SGD(problem, uniform_dist(problem.n)),
                    np_config(gamma=0.05, iters=10))
        assert trace.dist_sq is None and trace.lyapunov is None
        assert np.isnan(trace.weight)
        assert trace.x_final.shape == (problem.d,)

    def test_gap_tracks_the_smooth_part_only(self):
        problem = ridge(regularizer=ball_reg(0.5))
        ref = solve_reference(problem)
        x0 = np.zeros(problem.d)
        trace = run(problem, SGD(problem, uniform_dist(problem.n)),
                    np_config(gamma=0.01, iters=5), ref=ref)
        assert trace.f_gap[0] == pytest.approx(
            problem.value(x0) - ref.f_star, rel=1e-12)

    def test_relative_suboptimality_normalizes_to_the_start(self):
        problem = ridge()
        ref = solve_reference(problem)
        trace = run(problem, SGD(problem, uniform_dist(problem.n)),
                    np_config(gamma=0.02, iters=15), ref=ref)
        assert trace.rel_subopt[0] == 1.0
        assert_allclose(trace.rel_subopt, trace.f_gap / trace.f_gap[0])

    def test_start_at_the_solution_has_no_defined_normalization(self):
        problem = ridge()
        ref = solve_reference(problem)
        trace = run(problem, SGD(problem, uniform_dist(problem.n)),
                    np_config(gamma=0.01, iters=3, x0=ref.x_star), ref=ref)
        assert np.all(np.isnan(trace.rel_subopt))

    def test_lyapunov_combines_distance_and_state_variance(self):
        problem = ridge()
        ref = solve_reference(problem)
        cfg = np_config(gamma=0.03, iters=20, seed=2, weight=7.5)
        trace = run(problem, SAGA(problem), cfg, ref=ref)
        assert trace.weight == 7.5
        assert_allclose(trace.lyapunov,
                        trace.dist_sq + 7.5 * 0.03 ** 2 * trace.sigma_sq,
                        rtol=1e-15)

    def test_epoch_anchored_method_has_no_lyapunov_column(self):
        problem = ridge()
        ref = solve_reference(problem)
        trace = run(problem, SVRG(problem, m=5),
                    np_config(gamma=0.03, iters=12), ref=ref)
        assert trace.lyapunov is None
        assert trace.sigma_sq is not None
        assert np.all(np.isfinite(trace.sigma_sq))

    def test_initial_state_variance_recorded(self):
        problem = ridge()
        ref = solve_reference(problem)
        trace = run(problem, SAGA(problem),
                    np_config(gamma=0.03, iters=4, record_every=1), ref=ref)
        table = problem.grads_at(np.zeros(problem.d))
        want = np.mean(np.sum((table - ref.star_grads) ** 2, axis=1))
        assert trace.sigma_sq[0] == pytest.approx(want, rel=1e-12)


class TestErrorGuards:
    def test_divergence(self):
        problem = ridge()
        with pytest.raises(DivergenceError, match="exceeded"):
            run(problem, SGD(problem, uniform_dist(problem.n)),
                np_config(gamma=50.0, iters=2000, seed=0))

    def test_non_finite_gradient(self):
        problem = ridge()
        est = SGD(problem, uniform_dist(problem.n))
        bad = np.full(problem.d, np.nan)
        with pytest.raises(NumericalError, match="non-finite"):
            run(problem, est, np_config(gamma=0.05, iters=3, x0=bad))


class TestEnsemble:
    def test_needs_two_distinct_seeds(self):
        problem = ridge()
        factory = lambda: SGD(problem, uniform_dist(problem.n))  # noqa: E731
        cfg = np_config(gamma=0.05, iters=5)
        with pytest.raises(ValueError, match="distinct seeds"):
            ensemble(problem, factory, cfg, seeds=[3])
        with pytest.raises(ValueError, match="distinct seeds"):
            ensemble(problem, factory, cfg, seeds=[3, 3])

    def test_rows_match_individual_runs(self):
        problem = ridge()
        ref = solve_reference(problem)
        cfg = np_config(gamma=0.04, iters=12, record_every=3)
        ens = ensemble(problem, lambda: SAGA(problem), cfg,
                       seeds=[5, 6, 7], ref=ref)
        assert isinstance(ens, EnsembleTrace)
        assert ens.seeds == (5, 6, 7)
        assert ens.dist_sq.shape == (3, ens.iters.shape[0])
        for row, seed in enumerate(ens.seeds):
            single = run(problem, SAGA(problem),
                         np_config(gamma=0.04, iters=12, record_every=3,
                                   seed=seed), ref=ref)
            assert_array_equal(ens.dist_sq[row], single.dist_sq)
            assert_array_equal(ens.x_final[row], single.x_final)

    def test_factory_supplies_fresh_state(self):
        problem = ridge()
        built = []

        def factory():
            est = LSVRG(problem, p=0.5)
            built.append(est)
            return est

        ensemble(problem, factory, np_config(gamma=0.04, iters=6),
                 seeds=[1, 2])
        assert len(built) == 2 and built[0] is not built[1]

    def test_summaries(self):
        problem = ridge()
        ref = solve_reference(problem)
        ens = ensemble(problem, lambda: SEGA(problem),
                       np_config(gamma=0.01, iters=10),
                       seeds=range(4), ref=ref)
        assert_allclose(ens.mean("dist_sq"), ens.dist_sq.mean(axis=0))
        assert_allclose(
            ens.stderr("dist_sq"),
            ens.dist_sq.std(axis=0, ddof=1) / np.sqrt(4))
