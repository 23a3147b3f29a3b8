import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctff import (
    FactoredDistribution,
    ModelValidationError,
    PropagationConfig,
    ZeroProbabilityEvidence,
    amalgamate,
    condition_point,
    factored_rkf_propagate,
    factored_unif_propagate,
    factored_unif_step,
    make_disconnected,
    make_random_model,
    projected_multiply_M,
    projected_rate_apply,
    propagate_dense,
    restrict_for_interval_evidence,
    uniformize,
)

from conftest import joint_of, marginals_of, random_factored


def dense_projected(fd, model, matrix):
    joint = joint_of(fd) @ matrix
    return marginals_of(joint, [m.size for m in fd.marginals])


class TestProjectedMultiply:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**31))
    def test_matches_dense_projection(self, seed):
        rng = np.random.default_rng(seed)
        model = make_random_model(rng, (2, 3, 2))
        fd = random_factored(rng, (2, 3, 2))
        um = uniformize(model)
        # the CTBN rate is the sum of per-variable rates, not the joint maximum
        M = amalgamate(model).toarray() / um.alpha + np.eye(12)
        got = projected_multiply_M(fd, um)
        for a, b in zip(got.marginals, dense_projected(fd, model, M)):
            np.testing.assert_allclose(a, b, atol=1e-12)

    def test_running_example_worked_values(self, running):
        fd = FactoredDistribution(([0.6, 0.4], [0.5, 0.5]))
        out = projected_multiply_M(fd, uniformize(running))
        M = amalgamate(running).toarray() / 8.0 + np.eye(4)
        ref = dense_projected(fd, running, M)
        np.testing.assert_allclose(out.marginals[0], [0.625, 0.375], atol=1e-15)
        np.testing.assert_allclose(out.marginals[0], ref[0], atol=1e-15)
        np.testing.assert_allclose(out.marginals[1], ref[1], atol=1e-15)

    def test_restricted_tracks_lost_mass(self, running, rng):
        model = restrict_for_interval_evidence(running, "B", 0)
        fd = FactoredDistribution(([0.6, 0.4], [1.0, 0.0]))
        out = projected_multiply_M(fd, uniformize(model))
        Q = amalgamate(model)
        M = Q.toarray() / 7.0 + np.eye(4)
        joint = joint_of(fd) @ M
        assert math.isclose(math.exp(out.log_weight), joint.sum(), rel_tol=1e-12)

    def test_rate_apply_matches_dense(self, random3, rng):
        fd = random_factored(rng, (2, 3, 2))
        Q = amalgamate(random3).toarray()
        got = projected_rate_apply(fd, random3)
        for a, b in zip(got, dense_projected(fd, random3, Q)):
            np.testing.assert_allclose(a, b, atol=1e-12)
            assert abs(a.sum()) < 1e-12

    def test_rate_apply_finite_difference(self, random3, rng):
        """The projected derivative is the t-derivative of the exact marginals at t = 0."""
        fd = random_factored(rng, (2, 3, 2))
        Q = amalgamate(random3)
        h = 1e-6
        plus = propagate_dense(Q, joint_of(fd), h)
        minus = propagate_dense(Q, joint_of(fd), 0.0)
        fdiff = [(a - b) / h for a, b in zip(marginals_of(plus, (2, 3, 2)), marginals_of(minus, (2, 3, 2)))]
        for a, b in zip(projected_rate_apply(fd, random3), fdiff):
            np.testing.assert_allclose(a, b, atol=1e-4)


class TestUniformization:
    def test_running_example_half_time(self, running):
        fd = FactoredDistribution(([0.6, 0.4], [0.5, 0.5]))
        out = factored_unif_propagate(fd, uniformize(running), 0.5, PropagationConfig(theta=8.0, l=30))
        np.testing.assert_allclose(out.marginals[0], [0.65, 0.35], atol=0.01)
        np.testing.assert_allclose(out.marginals[1], [0.56, 0.44], atol=0.01)

    @pytest.mark.parametrize("t", [0.5, 2.0])
    def test_exact_on_disconnected(self, rng, t):
        model = make_disconnected(rng, (2, 3, 2))
        fd = random_factored(rng, (2, 3, 2))
        out = factored_unif_propagate(fd, uniformize(model), t, PropagationConfig(tail_tol=1e-12))
        exact = marginals_of(propagate_dense(amalgamate(model), joint_of(fd), t), (2, 3, 2))
        for a, b in zip(out.marginals, exact):
            np.testing.assert_allclose(a, b, atol=1e-10)

    def test_reprojection_consistency(self, running):
        """One sub-interval of length t equals the un-split step at theta >= alpha t."""
        fd = FactoredDistribution(([0.6, 0.4], [0.5, 0.5]))
        um = uniformize(running)
        whole = factored_unif_step(fd, um, 0.5, 40)
        via = factored_unif_propagate(fd, um, 0.5, PropagationConfig(theta=4.0, l=40))
        for a, b in zip(whole.marginals, via.marginals):
            np.testing.assert_allclose(a, b, atol=1e-15)

    def test_truncation_converges(self, running):
        fd = FactoredDistribution(([0.6, 0.4], [0.5, 0.5]))
        um = uniformize(running)
        ref = factored_unif_step(fd, um, 0.5, 80).marginals[0]
        errs = [np.abs(factored_unif_step(fd, um, 0.5, l).marginals[0] - ref).max() for l in (2, 4, 8, 16, 32)]
        assert all(b <= a + 1e-15 for a, b in zip(errs, errs[1:]))
        assert errs[-1] < 1e-12

    def test_trace_records(self, running):
        trace = []
        fd = FactoredDistribution(([0.6, 0.4], [0.5, 0.5]))
        factored_unif_propagate(fd, uniformize(running), 1.0, PropagationConfig(theta=2.0), trace)
        assert len(trace) == 4
        assert all(math.isclose(r.rate, 2.0) for r in trace)
        assert all(r.tail < 1e-10 for r in trace)

    def test_normalized_without_evidence(self, random3, rng):
        fd = random_factored(rng, (2, 3, 2))
        out = factored_unif_propagate(fd, uniformize(random3), 3.0)
        for m in out.marginals:
            assert math.isclose(m.sum(), 1.0, abs_tol=1e-12)
        assert abs(out.log_weight) < 1e-12

    def test_log_weight_additive(self, running):
        """Evidence mass over [0, a + b] is the product of the masses over the pieces."""
        model = restrict_for_interval_evidence(running, "B", 0)
        um = uniformize(model)
        fd = FactoredDistribution(([0.6, 0.4], [1.0, 0.0]))
        # alpha = 7, so both runs use sub-intervals of length 0.125
        cfg = PropagationConfig(theta=0.875, l=20)
        whole = factored_unif_propagate(fd, um, 0.5, cfg)
        half = factored_unif_propagate(factored_unif_propagate(fd, um, 0.25, cfg), um, 0.25, cfg)
        assert math.isclose(whole.log_weight, half.log_weight, rel_tol=1e-12)
        assert whole.log_weight < 0

    def test_interval_evidence_mass_is_approximate(self, running):
        """The projected operator ignores how survival reweights the parents,
        so the evidence mass is close to, but not equal to, the exact one."""
        model = restrict_for_interval_evidence(running, "B", 0)
        fd = FactoredDistribution(([0.6, 0.4], [1.0, 0.0]))
        out = factored_unif_propagate(fd, uniformize(model), 0.5, PropagationConfig(theta=1.0))
        exact = propagate_dense(amalgamate(model), joint_of(fd), 0.5).sum()
        assert math.isclose(math.exp(out.log_weight), exact, rel_tol=0.15)
        assert out.marginals[1][0] == 1.0

    def test_zero_time_identity(self, running):
        fd = FactoredDistribution(([0.6, 0.4], [0.5, 0.5]))
        assert factored_unif_propagate(fd, uniformize(running), 0.0) is fd


class TestRKF:
    def test_agrees_with_uniformization(self, random3, rng):
        fd = random_factored(rng, (2, 3, 2))
        a = factored_rkf_propagate(fd, random3, 1.5, PropagationConfig(rkf_tol=1e-10))
        b = factored_unif_propagate(fd, uniformize(random3), 1.5, PropagationConfig(theta=0.05, tail_tol=1e-13))
        # the two project at different granularities; both track the projected flow
        for x, y in zip(a.marginals, b.marginals):
            np.testing.assert_allclose(x, y, atol=2e-3)

    @pytest.mark.parametrize("t", [0.5, 2.0])
    def test_exact_on_disconnected(self, rng, t):
        model = make_disconnected(rng, (2, 3, 2))
        fd = random_factored(rng, (2, 3, 2))
        out = factored_rkf_propagate(fd, model, t, PropagationConfig(rkf_tol=1e-9))
        exact = marginals_of(propagate_dense(amalgamate(model), joint_of(fd), t), (2, 3, 2))
        for a, b in zip(out.marginals, exact):
            np.testing.assert_allclose(a, b, atol=1e-7)

    def test_tolerance_controls_error(self, rng):
        model = make_disconnected(rng, (3, 3))
        fd = random_factored(rng, (3, 3))
        exact = marginals_of(propagate_dense(amalgamate(model), joint_of(fd), 1.0), (3, 3))
        errs = []
        for tol in (1e-3, 1e-5, 1e-7, 1e-9):
            out = factored_rkf_propagate(fd, model, 1.0, PropagationConfig(rkf_tol=tol))
            errs.append(max(np.abs(a - b).max() for a, b in zip(out.marginals, exact)))
        assert errs[-1] < errs[0]
        assert errs[-1] < 1e-7

    def test_stats(self, running):
        stats = {}
        fd = FactoredDistribution(([0.6, 0.4], [0.5, 0.5]))
        factored_rkf_propagate(fd, running, 1.0, stats=stats)
        assert stats["accepted"] > 0

    def test_running_example_half_time(self, running):
        fd = FactoredDistribution(([0.6, 0.4], [0.5, 0.5]))
        out = factored_rkf_propagate(fd, running, 0.5, PropagationConfig(rkf_tol=1e-8))
        np.testing.assert_allclose(out.marginals[0], [0.65, 0.35], atol=0.01)
        np.testing.assert_allclose(out.marginals[1], [0.56, 0.44], atol=0.01)


class TestConditionPoint:
    def test_onehot_and_log_weight(self):
        fd = FactoredDistribution(([0.6, 0.4], [0.3, 0.7]))
        out = condition_point(fd, 1, 1)
        np.testing.assert_array_equal(out.marginals[1], [0, 1])
        np.testing.assert_array_equal(out.marginals[0], [0.6, 0.4])
        assert math.isclose(out.log_weight, math.log(0.7))

    def test_zero_probability(self):
        fd = FactoredDistribution(([1.0, 0.0],))
        with pytest.raises(ZeroProbabilityEvidence):
            condition_point(fd, 0, 1)


class TestConfig:
    @pytest.mark.parametrize(
        "kw", [{"theta": 0}, {"l": 0}, {"l": "many"}, {"tail_tol": 0}, {"rkf_tol": 2}, {"kappa": -1}]
    )
    def test_rejects(self, kw):
        with pytest.raises(ModelValidationError):
            PropagationConfig(**kw)

    def test_subintervals(self):
        cfg = PropagationConfig(theta=2.0)
        assert cfg.n_subintervals(0.5) == 1
        assert cfg.n_subintervals(4.0) == 2
        assert cfg.n_subintervals(4.1) == 3

    def test_serialization(self):
        fd = FactoredDistribution(([0.6, 0.4], [0.3, 0.7]), -0.5)
        back = FactoredDistribution.from_dict(fd.to_dict())
        assert back.log_weight == -0.5
        np.testing.assert_array_equal(back.marginals[1], [0.3, 0.7])

    def test_check_rejects_unnormalized(self):
        with pytest.raises(ModelValidationError):
            FactoredDistribution(([0.6, 0.5],)).check()



class TestPropagationProperties:
    def test_truncation_monotone_joint_kl(self, running):
        from ctff import choose_truncation, kl_divergence

        fd = FactoredDistribution(([0.6, 0.4], [0.5, 0.5]))
        um = uniformize(running)
        exact = propagate_dense(amalgamate(running), joint_of(fd), 0.5)
        top = choose_truncation(um.alpha * 0.5, 1e-10)
        kls = [kl_divergence(exact, joint_of(factored_unif_step(fd, um, 0.5, l))) for l in range(2, top + 1)]
        assert all(b <= a + 1e-10 for a, b in zip(kls, kls[1:]))

    def test_rkf_single_variable_order(self, rng):
        from ctff import CtbnModel, Variable

        model = CtbnModel((Variable("x", 3),), ((),), (np.array([[-2.0, 1.5, 0.5], [0.3, -0.4, 0.1], [1.0, 2.0, -3.0]]),))
        fd = FactoredDistribution((np.array([1.0, 0.0, 0.0]),))
        exact = propagate_dense(model.cims[0][0], fd.marginals[0], 1.0)
        errs = []
        for tol in (1e-4, 5e-5, 2.5e-5, 1.25e-5):
            out = factored_rkf_propagate(fd, model, 1.0, PropagationConfig(rkf_tol=tol))
            errs.append(np.abs(out.marginals[0] - exact).max())
        assert errs[-1] < errs[0]

    def test_point_evidence_log_weights_add(self):
        fd = FactoredDistribution(([0.6, 0.4], [0.3, 0.7]))
        out = condition_point(condition_point(fd, 0, 1), 1, 0)
        assert math.isclose(out.log_weight, math.log(0.4) + math.log(0.3))

    def test_consistent_deterministic_evidence(self):
        fd = FactoredDistribution(([1.0, 0.0], [0.3, 0.7]))
        out = condition_point(fd, 0, 0)
        assert out.log_weight == 0.0

    def test_identity_model_unchanged(self):
        from ctff import CtbnModel, Variable

        model = CtbnModel((Variable("a", 2), Variable("b", 2)), ((), (0,)), (np.zeros((1, 2, 2)), np.zeros((2, 2, 2))))
        fd = FactoredDistribution(([0.6, 0.4], [0.3, 0.7]))
        assert projected_multiply_M(fd, uniformize(model)) is fd
