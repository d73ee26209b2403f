import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fisherbench.bounds import (
    Bits,
    HeadConditionWarning,
    Ldp,
    achievable_rate,
    c_delta,
    constraint_from_dict,
    constraint_to_dict,
    cosine_prior_fisher,
    cosine_prior_make,
    cosine_prior_sample,
    discrete_worst_l2,
    efroimovich_check_gaussian,
    explicit_local_bound,
    global_lower_bound,
    hhp_optimize,
    kappa,
    ldp_factor,
    local_lower_bound,
    lq_from_l2,
    max_entropy_entropy,
    max_entropy_moment,
    partition_constant,
    reference_rate_l1,
    reference_rate_l2,
    van_trees_lq,
)
from fisherbench.errors import DomainError, UnsupportedCaseError
from fisherbench.models import (
    DiscreteDistribution,
    GaussianDiagCovariance,
    GaussianLocation,
    ProductBernoulli,
)

import oracles

Q_GRID = sorted(oracles.FROZEN_C_ME)


class TestConstants:
    @pytest.mark.parametrize("q", Q_GRID)
    def test_partition_constant_frozen(self, q):
        assert math.isclose(partition_constant(q), oracles.FROZEN_C_ME[q], rel_tol=1e-13)

    @pytest.mark.parametrize("q", Q_GRID)
    def test_kappa_frozen(self, q):
        assert math.isclose(kappa(q), oracles.FROZEN_KAPPA[q], rel_tol=1e-12)

    def test_q2_closed_form(self):
        assert abs(partition_constant(2) - math.sqrt(2 * math.pi * math.e)) < 1e-12

    def test_q1_is_two_e(self):
        assert abs(partition_constant(1) - 2 * math.e) < 1e-12

    def test_kappa_q1(self):
        assert abs(kappa(1) - math.sqrt(math.pi / (2 * math.e))) < 1e-12

    def test_kappa_q4_value(self):
        assert math.isclose(kappa(4), 2.484219, rel_tol=1e-6)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(1.0, 6.0))
    def test_partition_constant_mpmath(self, q):
        assert math.isclose(partition_constant(q), oracles.c_me_mpmath(q), rel_tol=1e-12)

    def test_q_below_one(self):
        with pytest.raises(DomainError):
            partition_constant(0.5)

    @pytest.mark.parametrize("q", [1.0, 1.5, 2.0, 3.0, 4.0])
    @pytest.mark.parametrize("moment", [0.5, 1.0, 2.0])
    def test_max_entropy_against_quadrature(self, q, moment):
        h, m = oracles.max_entropy_by_quadrature(q, moment)
        assert math.isclose(max_entropy_moment(q, q * moment), m, rel_tol=1e-9)
        assert math.isclose(max_entropy_entropy(q, q * moment), h, rel_tol=1e-9, abs_tol=1e-10)
        assert math.isclose(h, math.log(partition_constant(q) * moment ** (1 / q)), rel_tol=1e-9, abs_tol=1e-10)


class TestVanTrees:
    def test_conjugate_gaussian(self):
        # 1/sigma^2 + 1/tau^2 = 4, posterior variance 1/4
        v = van_trees_lq(2, 1, [[4.0]])
        assert math.isclose(v, 0.25)
        assert math.isclose(v, oracles.gaussian_posterior_variance(1 / math.sqrt(2), 1 / math.sqrt(2)))

    def test_isotropic_forms_agree(self):
        info = np.diag([4.0, 4.0])
        assert math.isclose(van_trees_lq(2, 2, info, "det"), 0.5)
        assert math.isclose(van_trees_lq(2, 2, info, "trace"), 0.5)

    def test_q1(self):
        assert math.isclose(van_trees_lq(1, 1, [[4.0]]), kappa(1) / 2)
        assert math.isclose(kappa(1) / 2, 0.38009, rel_tol=1e-4)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(0.1, 50.0), min_size=1, max_size=6), st.floats(1.0, 4.0))
    def test_trace_form_is_weaker(self, diag, q):
        info = np.diag(diag)
        d = len(diag)
        assert van_trees_lq(q, d, info, "trace") <= van_trees_lq(q, d, info, "det") * (1 + 1e-12)

    def test_singular(self):
        with pytest.raises(DomainError):
            van_trees_lq(2, 2, np.zeros((2, 2)))


class TestEfroimovich:
    def test_example(self):
        lhs, rhs = efroimovich_check_gaussian(3, 1.0, 2.0)
        assert math.isclose(lhs, 0.8) and math.isclose(rhs, 0.8)

    def test_flat_prior(self):
        lhs, rhs = efroimovich_check_gaussian(1, 1.5, 1e6)
        assert math.isclose(lhs, 2.25, rel_tol=1e-9) and math.isclose(rhs, 2.25, rel_tol=1e-9)

    def test_unit(self):
        lhs, rhs = efroimovich_check_gaussian(2, 1.0, 1.0)
        assert math.isclose(lhs, 0.5) and math.isclose(rhs, 0.5)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 10), st.floats(0.1, 5.0), st.floats(0.1, 5.0))
    def test_equals_posterior_variance(self, d, sigma, tau):
        lhs, rhs = efroimovich_check_gaussian(d, sigma, tau)
        post = oracles.gaussian_posterior_variance(sigma, tau)
        assert math.isclose(lhs, post, rel_tol=1e-10) and math.isclose(rhs, post, rel_tol=1e-10)


class TestGlobalBound:
    def test_discrete_bits(self):
        r = global_lower_bound(DiscreteDistribution(10), Bits(1), 10**4, 2)
        assert math.isclose(r.value, 5e-4)
        assert r.regime_ok

    def test_gaussian_bits(self):
        r = global_lower_bound(GaussianLocation(4, sigma=1.0, range_B=1.0), Bits(2), 100, 2)
        assert math.isclose(r.value, 0.08)

    def test_discrete_ldp(self):
        r = global_lower_bound(DiscreteDistribution(10), Ldp(1.0), 10**4, 2)
        assert math.isclose(r.value, 10 / (10**4 * math.e))
        assert math.isclose(r.value, 3.679e-4, rel_tol=1e-3)

    def test_regime_violation(self):
        assert not global_lower_bound(DiscreteDistribution(10), Bits(1), 10, 2).regime_ok

    def test_covariance_ldp_unsupported(self):
        with pytest.raises(UnsupportedCaseError):
            global_lower_bound(GaussianDiagCovariance(3, 0.5, 2.0), Ldp(1.0), 100, 2)

    def test_covariance_flagged(self):
        r = global_lower_bound(GaussianDiagCovariance(3, 0.5, 2.0), Bits(1), 1000, 2)
        assert "tightness_open" in r.flags

    def test_bernoulli_cases(self):
        r = global_lower_bound(ProductBernoulli(8), Bits(2), 1000, 2)
        assert math.isclose(r.value, 8 * 8 / (1000 * 2))
        r = global_lower_bound(ProductBernoulli(8, "simplex"), Ldp(1.0), 1000, 2)
        assert math.isclose(r.value, 8 / (1000 * math.e))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 50), st.integers(1, 6), st.integers(10, 10**6), st.floats(1.0, 4.0))
    def test_decreasing_in_n(self, d, b, n, q):
        m = DiscreteDistribution(d)
        assert global_lower_bound(m, Bits(b), 2 * n, q).value < global_lower_bound(m, Bits(b), n, q).value

    def test_to_dict_keys(self):
        out = global_lower_bound(DiscreteDistribution(10), Bits(1), 10**4, 2).to_dict()
        assert list(out) == ["value", "terms", "regime_ok", "regime_condition", "constants_used", "kind", "flags"]


class TestLocalBound:
    def test_uniform_example_terms(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", HeadConditionWarning)
            r = local_lower_bound(np.full(16, 1 / 16), Bits(1), 10**6, 2, 0.5, c_delta_rule="square")
        t = r.terms
        assert math.isclose(t["delta_quantized"], 5.556e-8, rel_tol=1e-3)
        assert math.isclose(t["logd_quantized"], 2.885e-6, rel_tol=1e-3)
        assert math.isclose(t["delta_centralized"], 2.778e-8, rel_tol=1e-3)
        assert math.isclose(t["logd_centralized"], 3.607e-7, rel_tol=1e-3)
        assert math.isclose(r.value, t["logd_quantized"])

    def test_head_condition_warns(self):
        with pytest.warns(HeadConditionWarning):
            r = local_lower_bound(np.full(4, 0.25), Bits(1), 1000, 2, 0.5)
        assert any(f.startswith("head_condition_failed") for f in r.flags)

    def test_zero_coordinates(self):
        p = np.zeros(6)
        p[:2] = [0.6, 0.4]
        r = local_lower_bound(p, Bits(2), 10**5, 2, 0.5)
        assert math.isfinite(r.value) and r.value > 0

    def test_delta_zero(self):
        with pytest.raises(DomainError):
            local_lower_bound(np.full(4, 0.25), Bits(1), 1000, 2, 0.0)

    def test_ldp_rate_factor(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", HeadConditionWarning)
            r = local_lower_bound(np.full(8, 1 / 8), Ldp(1.0), 1000, 2, 0.5)
        assert math.isclose(r.constants_used["rate_factor"], min(math.e, (math.e - 1) ** 2))

    def test_agrees_with_global_for_uniform(self):
        d, n = 16, 10**6
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", HeadConditionWarning)
            loc = local_lower_bound(np.full(d, 1 / d), Bits(2), n, 2, 0.5).value
        glob = global_lower_bound(DiscreteDistribution(d), Bits(2), n, 2).value
        ratio = loc / glob
        assert 1 / (kappa(2) * math.log(d) * 10) <= ratio <= 10

    def test_literal_matches_at_q2(self):
        p = np.array([0.55, 0.2, 0.15, 0.1])
        a = local_lower_bound(p, Bits(1), 10**5, 2, 0.5)
        b = local_lower_bound(p, Bits(1), 10**5, 2, 0.5, literal=True)
        assert a.terms == b.terms

    def test_explicit_bound_is_positive(self):
        p = np.array([0.55, 0.2, 0.15, 0.1])
        r = explicit_local_bound(p, Bits(1), 10**5, 2)
        assert r.value > 0 and set(r.terms) == {"h=2", "h=3", "h=4"}


class TestHHP:
    def test_example(self):
        r = hhp_optimize(np.array([0.5, 0.25, 0.125, 0.125]), 2, 1.0)
        assert math.isclose(r.max_over_h, 2.0) and r.argmax_h == 4

    def test_uniform(self):
        r = hhp_optimize(np.full(9, 1 / 9), 2, 0.5)
        assert math.isclose(r.max_over_h, 9.0) and r.argmax_h == 9

    def test_first_bullet_example(self):
        p = np.array([0.5, 0.25, 0.125, 0.125])
        r = hhp_optimize(p, 2, 1.0)
        assert math.isclose(r.c_delta, 0.5)
        assert math.isclose(r.norm_bound_delta, 0.5 * 0.56694 ** (2 / 3), rel_tol=1e-4)
        assert r.max_over_h >= r.norm_bound_delta

    def test_c_delta_rules(self):
        assert math.isclose(c_delta(1.0), 0.5)
        assert math.isclose(c_delta(0.5, "square"), 1 / 9)
        with pytest.raises(DomainError):
            c_delta(0.0)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=40).filter(lambda w: sum(w) > 0),
           st.sampled_from([1.0, 2.0, 4.0]), st.sampled_from([0.1, 0.5, 1.0]))
    def test_against_brute_force(self, w, q, delta):
        p = np.asarray(w) / sum(w)
        r = hhp_optimize(p, q, delta)
        best, _ = oracles.brute_hhp(p, q)
        assert math.isclose(r.max_over_h, best, rel_tol=1e-12)
        assert r.max_over_h >= r.norm_bound_delta
        assert r.max_linear >= r.linear_bound_delta

    def test_literal_counterexample(self):
        # the first-power norm reading fails for q > 2 on heavy-tailed points
        p = np.arange(1.0, 2001) ** -1.5
        p /= p.sum()
        lit = hhp_optimize(p, 4, 0.5, literal=True)
        fixed = hhp_optimize(p, 4, 0.5)
        assert lit.max_over_h < lit.norm_bound_delta
        assert fixed.max_over_h >= fixed.norm_bound_delta


class TestCosinePrior:
    def test_trace(self):
        pr = cosine_prior_make(np.zeros(3), 0.1)
        assert math.isclose(cosine_prior_fisher(pr), 3 * math.pi**2 / 0.01)
        assert math.isclose(cosine_prior_fisher(pr), 2960.88, rel_tol=1e-5)

    def test_support(self):
        pr = cosine_prior_make(np.array([0.3, -0.2]), 0.05)
        xs = cosine_prior_sample(pr, 9, size=10**5)
        assert np.all(np.abs(xs - pr.center) <= 0.05)

    def test_quadrature(self):
        assert math.isclose(oracles.cosine_fisher_by_quadrature(1.0), math.pi**2, rel_tol=1e-3)
        assert math.isclose(cosine_prior_fisher(cosine_prior_make([0.0], 1.0)), math.pi**2)

    def test_density_integrates_and_samples_match(self):
        pr = cosine_prior_make([0.0], 1.0)
        t = np.linspace(-1, 1, 20001)
        assert math.isclose(np.sum(pr.density(t[:, None])) * (t[1] - t[0]), 1.0, rel_tol=1e-3)
        xs = cosine_prior_sample(pr, 1, size=200000)[:, 0]
        # variance of cos^2(pi t/2) on [-1, 1] is 1/3 - 2/pi^2
        assert math.isclose(xs.var(), 1 / 3 - 2 / math.pi**2, rel_tol=0.02)

    def test_bad_radius(self):
        with pytest.raises(DomainError):
            cosine_prior_make([0.0], 0.0)


class TestRates:
    def test_holder(self):
        assert math.isclose(lq_from_l2(0.01, 100, 1), 1.0)
        assert math.isclose(lq_from_l2(0.37, 9, 2), 0.37)
        with pytest.raises(DomainError):
            lq_from_l2(0.1, 4, 3)

    def test_reference_curve(self):
        r = reference_rate_l2(np.full(16, 1 / 16), 10**5, 4)
        assert math.isclose(r.value, 4e-5)
        assert "o_n_dropped" in r.flags
        assert reference_rate_l1(np.full(16, 1 / 16), 10**5, 4).value > 0

    def test_grouping_rate(self):
        worst = discrete_worst_l2(16, Bits(2), 6000)
        assert math.isclose(worst["grouping"], (1 - 1 / 16) / 1000)

    def test_rate_above_bound(self):
        for c in (Bits(1), Bits(3), Ldp(0.5), Ldp(2.0)):
            m = DiscreteDistribution(16)
            assert achievable_rate(m, c, 10**5, 2).value >= global_lower_bound(m, c, 10**5, 2).value

    def test_order_only_flag(self):
        assert "order_only" in achievable_rate(DiscreteDistribution(8), Bits(2), 10**4, 4).flags

    def test_unsupported(self):
        with pytest.raises(UnsupportedCaseError):
            achievable_rate(GaussianLocation(3), Ldp(1.0), 100, 2)


def test_constraint_round_trip():
    for c in (Bits(3), Ldp(0.75)):
        assert constraint_from_dict(constraint_to_dict(c)) == c
    with pytest.raises(DomainError):
        Bits(0)
    with pytest.raises(DomainError):
        Ldp(-1.0)


def test_ldp_factor():
    assert math.isclose(ldp_factor(1.0), math.e)
    assert math.isclose(ldp_factor(0.5), (math.exp(0.5) - 1) ** 2)
