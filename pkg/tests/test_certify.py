"""Both certification routes — exact enumeration through the live step and
vectorized Monte Carlo moments — plus their agreement draw-for-draw."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from proxsgd.certify import (ScriptedStreams, check_assumption,
                             enumerate_mean, enumeration_outcomes,
                             make_draws, make_state, moment_samples,
                             moments_from_draws, script_for)
from proxsgd.estimators import (DIANA, LSVRG, NSAGA, NSEGA, QSGDSR, SAGA,
                                SEGA, SGD, SGDMB, SGDInd, SGDStar, SVRG,
                                VRDIANA, tau_l_svrg)
from proxsgd.problems import NoisyOracle, make_least_squares
from proxsgd.quantize import dithering_ternary, identity, rand_k
from proxsgd.reference import solve_reference
from proxsgd.rng import Streams
from proxsgd.sampling import IndexDistribution, uniform_dist


def ridge(n=6, d=4, lam=0.3, seed=42):
    rng = np.random.default_rng(seed)
    return make_least_squares(rng.standard_normal((n, d)),
                              rng.standard_normal(n), lam=lam)


class TestScriptedStreams:
    def test_replays_in_order(self):
        s = ScriptedStreams(index=[0.1, 0.7], noise=[1.5])
        assert s.index.random() == 0.1
        assert s.noise.standard_normal() == 1.5
        assert s.index.random() == 0.7
        assert s.consumed

    def test_array_requests_pop_in_bulk(self):
        s = ScriptedStreams(noise=[1.0, 2.0, 3.0, 4.0])
        assert_array_equal(s.noise.standard_normal(4), [1.0, 2.0, 3.0, 4.0])

    def test_exhaustion_raises(self):
        s = ScriptedStreams(index=[0.5])
        s.index.random()
        with pytest.raises(RuntimeError, match="exhausted"):
            s.index.random()

    def test_leftover_draws_show_as_unconsumed(self):
        s = ScriptedStreams(index=[0.5, 0.5])
        s.index.random()
        assert not s.consumed

    def test_integer_replay_checks_range(self):
        s = ScriptedStreams(quantizer=[7])
        with pytest.raises(RuntimeError, match="outside"):
            s.quantizer.integers(0, 4)

    def test_child_must_be_scripted(self):
        with pytest.raises(RuntimeError, match="no scripted child stream"):
            ScriptedStreams(index=[0.5]).child(1)
        inner = ScriptedStreams(index=[0.25])
        outer = ScriptedStreams(coin=[0.9], children={1: inner})
        assert outer.child(1) is inner


class TestEnumeration:
    def setup_method(self):
        self.problem = ridge()
        self.ref = solve_reference(self.problem)
        rng = np.random.default_rng(3)
        self.x = self.ref.x_star + 0.5 * rng.standard_normal(self.problem.d)

    def warmed(self, est, steps=3):
        est.start(np.zeros(self.problem.d))
        streams = Streams(11)
        x = np.zeros(self.problem.d)
        for _ in range(steps):
            g = est.next(x, streams)
            x = x - 0.01 * g
            x = est.post_step(x)
        return est, x

    @pytest.mark.parametrize("build, count", [
        (lambda p: SGD(p, uniform_dist(p.n)), 6),
        (lambda p: SGD(p, IndexDistribution(
            np.array([0.3, 0.1, 0.1, 0.1, 0.2, 0.2]))), 6),
        (lambda p: SGDMB(p, uniform_dist(p.n), tau=2), 36),
        (lambda p: SAGA(p), 6),
        (lambda p: SEGA(p), 4),
        (lambda p: SVRG(p, m=5), 6),
        (lambda p: LSVRG(p, p=0.4), 12),
        (lambda p: LSVRG(p, p=1.0), 6),
    ])
    def test_mean_is_the_gradient(self, build, count):
        est, x = self.warmed(build(self.problem))
        mean, n_outcomes = enumerate_mean(est, self.x)
        assert n_outcomes == count
        assert_allclose(mean, self.problem.grad(self.x), rtol=0, atol=1e-12)

    def test_shifted_sampling_is_also_unbiased(self):
        est = SGDStar(self.problem, uniform_dist(self.problem.n),
                      self.ref.star_grads)
        mean, n_outcomes = enumerate_mean(est, self.x)
        assert n_outcomes == 6
        assert_allclose(mean, self.problem.grad(self.x), rtol=0, atol=1e-12)

    def test_state_is_restored(self):
        est, _ = self.warmed(SAGA(self.problem))
        table = est.table.copy()
        avg = est.avg.copy()
        enumerate_mean(est, self.x)
        assert_array_equal(est.table, table)
        assert_array_equal(est.avg, avg)

    def test_anchor_is_restored(self):
        est, x = self.warmed(LSVRG(self.problem, p=0.7))
        anchor = est.anchor.copy()
        enumerate_mean(est, self.x)
        assert_array_equal(est.anchor, anchor)

    @pytest.mark.parametrize("build", [
        lambda p: DIANA(p, 2, identity(), alpha=0.5),
        lambda p: NSAGA(NoisyOracle(p, 0.1, mode="full")),
        lambda p: QSGDSR(p, uniform_dist(p.n), rand_k(2)),
        lambda p: SGDInd(p, np.full(p.n, 0.5)),
    ])
    def test_continuous_randomness_refuses_to_enumerate(self, build):
        est = build(self.problem)
        est.start(np.zeros(self.problem.d))
        with pytest.raises(ValueError, match="continuous or compound"):
            list(enumeration_outcomes(est))


class TestMakeDraws:
    S = 16

    def shapes(self, est):
        draws = make_draws(est, self.S, np.random.default_rng(0))
        assert draws["_samples"] == self.S
        return {k: np.shape(v) for k, v in draws.items() if k != "_samples"}

    def test_per_method_draw_tables(self):
        problem = ridge()
        n, d, S = problem.n, problem.d, self.S
        u = uniform_dist(n)
        cases = [
            (SGD(problem, u), {"index_u": (S,)}),
            (SGDMB(problem, u, tau=3), {"index_u": (S, 3)}),
            (SGDInd(problem, np.full(n, 0.5)), {"index_u": (S, n)}),
            (QSGDSR(problem, u, rand_k(2)),
             {"index_u": (S,), "fy": (S, 2)}),
            (QSGDSR(problem, u, dithering_ternary()),
             {"index_u": (S,), "qu": (S, d)}),
            (NSAGA(NoisyOracle(problem, 0.01, mode="full")),
             {"index_u": (S,), "noise": (S, d)}),
            (NSEGA(NoisyOracle(problem, 0.01, mode="partial")),
             {"index_u": (S,), "noise": (S,)}),
            (LSVRG(problem, p=0.2), {"index_u": (S,), "coin_u": (S,)}),
            (DIANA(problem, 2, rand_k(2), alpha=0.25),
             {"fy": (S, 2, 2)}),
            (DIANA(problem, 2, identity(), alpha=0.5, mode="stochastic",
                   noise_sq=0.05), {"noise": (S, 2, d)}),
            (VRDIANA(problem, 2, rand_k(2), alpha=0.1, variant=1),
             {"index_u": (S, 2), "coin_u": (S,), "fy": (S, 2, 2)}),
            (VRDIANA(problem, 2, rand_k(2), alpha=0.1, variant=2),
             {"index_u": (S, 2), "fy": (S, 2, 2)}),
        ]
        for est, want in cases:
            assert self.shapes(est) == want, est.method_id

    def test_compound_methods_have_no_sampler(self):
        est = tau_l_svrg(ridge(), tau=0.5, p=0.5)
        with pytest.raises(ValueError, match="no batch sampler"):
            make_draws(est, self.S, np.random.default_rng(0))
        est.start(np.zeros(4))
        with pytest.raises(ValueError, match="no moment sampler"):
            moment_samples(est, np.zeros(4), None, self.S,
                           np.random.default_rng(0))


def parity_cases():
    """(label, estimator factory) for every moment sampler."""
    u = uniform_dist(6)
    imp = IndexDistribution(np.array([0.3, 0.1, 0.1, 0.1, 0.2, 0.2]))
    return [
        ("sgd-uniform", lambda p: SGD(p, u)),
        ("sgd-importance", lambda p: SGD(p, imp)),
        ("sgd_mb", lambda p: SGDMB(p, u, tau=3)),
        ("sgd_ind", lambda p: SGDInd(p, np.full(p.n, 0.4))),
        ("sgd_star", None),  # needs ref; patched in the test
        ("q_sgd_sr-rand_k", lambda p: QSGDSR(p, u, rand_k(2))),
        ("q_sgd_sr-ternary", lambda p: QSGDSR(p, u, dithering_ternary())),
        ("saga", lambda p: SAGA(p)),
        ("n_saga", lambda p: NSAGA(NoisyOracle(p, 0.01, mode="full"))),
        ("sega", lambda p: SEGA(p)),
        ("n_sega", lambda p: NSEGA(NoisyOracle(p, 0.04, mode="partial"))),
        ("svrg", lambda p: SVRG(p, m=5)),
        ("l_svrg", lambda p: LSVRG(p, p=0.2)),
        ("diana-rand_k", lambda p: DIANA(p, 2, rand_k(2), alpha=0.25)),
        ("diana-ternary", lambda p: DIANA(p, 2, dithering_ternary(),
                                          alpha=0.2)),
        ("diana-stochastic", lambda p: DIANA(p, 2, identity(), alpha=0.5,
                                             mode="stochastic",
                                             noise_sq=0.05)),
        ("vr_diana-v1", lambda p: VRDIANA(p, 2, rand_k(2), alpha=0.1,
                                          variant=1)),
        ("vr_diana-v2", lambda p: VRDIANA(p, 2, rand_k(2), alpha=0.1,
                                          variant=2)),
        ("vr_diana-identity", lambda p: VRDIANA(p, 2, identity(), alpha=0.1,
                                                variant=1)),
    ]


class TestLiveAgreement:
    """The vectorized moment tables must match the live next() draw for
    draw — same uniforms, same shuffles, same noise."""

    S = 64

    @pytest.mark.parametrize("label, build",
                             parity_cases(),
                             ids=[c[0] for c in parity_cases()])
    def test_row_for_row(self, label, build):
        problem = ridge()
        ref = solve_reference(problem)
        if build is None:
            est = SGDStar(problem, uniform_dist(problem.n), ref.star_grads)
        else:
            est = build(problem)
        rng = np.random.default_rng(5)
        x = make_state(est, ref, rng, radius=0.7, warmup=2)
        snap = est.snapshot()
        sigma_before = est.sigma_sq(ref)

        draws = make_draws(est, self.S, rng)
        dev_sq, sigma_next = moments_from_draws(est, x, ref, draws)
        assert dev_sq.shape == (self.S,)
        assert sigma_next.shape == (self.S,)
        assert est.sigma_sq(ref) == sigma_before  # sampler left no trace

        for s in range(self.S):
            streams = script_for(est, draws, s)
            g = est.next(x, streams)
            assert streams.consumed, f"{label}: row {s} left draws unread"
            live_dev = float(np.sum((g - ref.grad_star) ** 2))
            live_sigma = est.sigma_sq(ref)
            est.restore(snap)
            assert_allclose(dev_sq[s], live_dev, rtol=5e-13, atol=1e-15,
                            err_msg=f"{label}: deviation row {s}")
            assert_allclose(sigma_next[s], live_sigma, rtol=5e-13,
                            atol=1e-15,
                            err_msg=f"{label}: state variance row {s}")

    def test_zero_message_aborts_batch_quantization(self):
        # all-zero target and start: every node message is exactly zero, and
        # the batch quantizer must refuse rather than desync its draw table
        rng = np.random.default_rng(0)
        problem = make_least_squares(rng.standard_normal((6, 4)),
                                     np.zeros(6), lam=0.3)
        ref = solve_reference(problem)
        est = DIANA(problem, 2, rand_k(2), alpha=0.25)
        est.start(np.zeros(4))
        with pytest.raises(RuntimeError, match="zero vector"):
            moment_samples(est, np.zeros(4), ref, 8, rng)


class TestCheckAssumption:
    def test_needs_real_sample_sizes(self):
        problem = ridge()
        ref = solve_reference(problem)
        est = SGD(problem, uniform_dist(problem.n))
        with pytest.raises(ValueError, match="1e4"):
            check_assumption(est, ref, samples=500)

    def test_certified_constants_pass(self):
        problem = ridge()
        ref = solve_reference(problem)
        est = SGD(problem, uniform_dist(problem.n))
        report = check_assumption(est, ref, samples=20_000, n_states=8,
                                  seed=0)
        assert report.method == "sgd"
        assert report.samples == 20_000
        assert report.passes == 8
        assert report.ok
        for state in report.states:
            assert state.lhs_moment <= state.rhs_moment + state.slack_moment

    def test_stateful_constants_pass(self):
        problem = ridge()
        ref = solve_reference(problem)
        report = check_assumption(SAGA(problem), ref, samples=20_000,
                                  n_states=6, seed=1)
        assert report.ok, [(s.radius, s.lhs_moment, s.rhs_moment)
                           for s in report.states if not s.ok_moment]

    def test_undersized_curvature_is_caught(self):
        # two wildly unequal rows: the component-gradient spread at moderate
        # distances needs the full certified curvature, so half of it must
        # produce a flagged state
        problem = make_least_squares(np.array([[1.0], [0.01]]),
                                     np.array([-1.0, 100.0]), lam=0.0)
        ref = solve_reference(problem)
        est = SGD(problem, uniform_dist(2))
        # the violating region is one-sided (positive cross term), so the
        # seed is pinned to one that lands several states inside it
        report = check_assumption(est, ref, samples=10_000, n_states=20,
                                  seed=3, curvature_scale=0.5)
        assert not report.ok
        bad = [s for s in report.states if not s.ok_moment]
        assert len(bad) >= 2, "halving the curvature constant went unnoticed"
        assert all(s.lhs_moment > s.rhs_moment + s.slack_moment
                   for s in bad)
        # the same setup with the certified constant is clean
        clean = check_assumption(est, ref, samples=10_000, n_states=20,
                                 seed=3)
        assert clean.ok
