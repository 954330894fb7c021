"""
Tests for model/: parameter validation, joint/conditional policy conversion
and the analytic evaluators.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from model.evaluators import (avg_power, pu_rate_joint, pu_service_rate, su_rates,
                              su_rates_conditional, with_little_busy_prob)
from model.params import make_params, symmetric_params, validate
from model.policy import ConditionalPolicy, JointPolicy, to_conditional, to_joint
from utils.errors import DimensionError, InvalidPolicyError

LEVELS = [0.0, 0.25, 0.5, 0.75, 1.0]
SU = [0.0, 0.3, 0.5, 0.8, 1.0]
COOP = [0.4, 0.5, 0.6, 0.7, 0.8]


def point_mass(params, s, i):
    tables = [np.zeros(n) for n in params.level_counts]
    tables[s][i] = 1.0
    return tuple(tables)


def zeros(params):
    return tuple(np.zeros(n) for n in params.level_counts)


def random_joint(params, rng):
    vector = rng.dirichlet(np.ones(2 * params.block_size))
    return JointPolicy.from_vector(params, vector)


class TestValidation:
    def test_reference_parameters_are_valid(self, two_su, five_su):
        assert validate(two_su) == []
        assert validate(five_su) == []

    def test_coop_not_monotone(self):
        coop = [0.4, 0.5, 0.45, 0.7, 0.8]
        params = symmetric_params(2, LEVELS, SU, coop, 0.4, 0.5)
        issues = validate(params)
        assert {v.code for v in issues} == {'coop_monotone'}
        assert [v.index for v in issues] == [(0, 2), (1, 2)]
        assert "coop_success not monotone at (0,2)" in issues[0].message

    def test_power_levels_not_strict(self):
        levels = [0.0, 0.25, 0.5, 0.5, 1.0]
        issues = validate(symmetric_params(1, levels, SU, COOP, 0.4, 0.5))
        assert [v.code for v in issues] == ['power_monotone']
        assert "power_levels not strictly increasing" in issues[0].message

    def test_every_violation_is_reported(self):
        params = make_params([[0.1, 0.5]], [[0.2, 1.5]], [[0.3, 0.6]], 0.4, -1.0, -0.2)
        codes = {v.code for v in validate(params)}
        assert codes == {'level_zero', 'probability', 'su_level_zero', 'coop_level_zero',
                         'budget', 'arrival_rate'}

    def test_shape_mismatch(self):
        params = make_params([LEVELS], [SU[:4]], [COOP], 0.4, 0.5)
        assert [v.code for v in validate(params)] == ['shape']

    def test_scalar_budget_is_broadcast(self):
        params = symmetric_params(3, LEVELS, SU, COOP, 0.4, 0.15)
        assert_allclose(params.power_budget, [0.15, 0.15, 0.15])
        assert params.block_size == 15
        assert params.block_offsets == [0, 5, 10, 15]


class TestPolicyConversion:
    def test_zero_busy_probability(self, two_su):
        cond_idle = (np.array([0.1, 0.2, 0.1, 0.0, 0.1]), np.array([0.1, 0.1, 0.1, 0.1, 0.1]))
        cond = ConditionalPolicy(0.0, point_mass(two_su, 1, 3), cond_idle)
        joint = to_joint(cond)
        assert joint.busy_mass == 0.0
        for got, want in zip(joint.q_e, cond_idle):
            assert_allclose(got, want)

    def test_point_masses(self):
        params = symmetric_params(1, LEVELS, SU, COOP, 0.4, 1.0)
        cond = ConditionalPolicy(0.5, point_mass(params, 0, 4), point_mass(params, 0, 4))
        joint = to_joint(cond)
        assert_allclose(joint.q_b[0], [0, 0, 0, 0, 0.5])
        assert_allclose(joint.q_e[0], [0, 0, 0, 0, 0.5])

        back = to_conditional(joint)
        assert back.busy_prob == 0.5
        assert_allclose(back.cond_busy[0], [0, 0, 0, 0, 1])
        assert_allclose(back.cond_idle[0], [0, 0, 0, 0, 1])

    def test_all_idle_joint(self, two_su):
        joint = JointPolicy(q_e=point_mass(two_su, 0, 4), q_b=zeros(two_su))
        cond = to_conditional(joint)
        assert cond.busy_prob == 0.0
        assert all(np.all(t == 0) for t in cond.cond_busy)
        assert_allclose(cond.cond_idle[0], [0, 0, 0, 0, 1])

    def test_random_joint_mass_split(self, five_su):
        rng = np.random.default_rng(11)
        for _ in range(20):
            cond = to_conditional(random_joint(five_su, rng))
            joint = to_joint(cond)
            assert abs(joint.total_mass - 1.0) < 1e-12
            assert abs(joint.busy_mass - cond.busy_prob) < 1e-12

    def test_round_trip_of_interior_policies(self, five_su):
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            joint = random_joint(five_su, rng)
            back = to_joint(to_conditional(joint))
            assert_allclose(back.flatten(), joint.flatten(), rtol=0, atol=1e-12)

    @pytest.mark.parametrize('busy', [0.0, 1.0])
    def test_degenerate_states_keep_su_rates(self, two_su, busy):
        rng = np.random.default_rng(5)
        side = two_su.split(rng.dirichlet(np.ones(two_su.block_size)))
        joint = JointPolicy(q_e=zeros(two_su), q_b=side) if busy else JointPolicy(q_e=side, q_b=zeros(two_su))
        cond = to_conditional(joint)
        assert cond.busy_prob == pytest.approx(busy, abs=1e-15)
        assert_allclose(su_rates(to_joint(cond), two_su), su_rates(joint, two_su), rtol=1e-14, atol=0)

    def test_negative_entry_rejected(self, two_su):
        q_e = list(point_mass(two_su, 0, 0))
        q_e[1] = np.array([0.0, -0.1, 0.0, 0.0, 0.1])
        with pytest.raises(InvalidPolicyError):
            JointPolicy(q_e=tuple(q_e), q_b=zeros(two_su)).check()

    def test_mass_must_be_one(self, two_su):
        half = tuple(0.5 * t for t in point_mass(two_su, 0, 1))
        with pytest.raises(InvalidPolicyError):
            JointPolicy(q_e=half, q_b=zeros(two_su)).check()

    def test_conditional_table_must_be_normalized(self, two_su):
        cond = ConditionalPolicy(0.4, tuple(0.5 * t for t in point_mass(two_su, 0, 1)),
                                 point_mass(two_su, 0, 0))
        with pytest.raises(InvalidPolicyError):
            cond.check()

    def test_mismatched_blocks(self):
        with pytest.raises(DimensionError):
            JointPolicy(q_e=(np.zeros(3),), q_b=(np.zeros(4),))

    def test_rows_round_trip(self, two_su):
        joint = random_joint(two_su, np.random.default_rng(3))
        back = JointPolicy.from_rows(two_su, joint.to_rows())
        assert np.array_equal(back.flatten(), joint.flatten())


class TestEvaluators:
    def test_idle_point_mass_rate(self, two_su):
        joint = JointPolicy(q_e=point_mass(two_su, 0, 4), q_b=zeros(two_su))
        assert_allclose(su_rates(joint, two_su), [1.0, 0.0])

    def test_all_busy_gives_zero_rates(self, two_su):
        joint = JointPolicy(q_e=zeros(two_su), q_b=point_mass(two_su, 1, 2))
        assert_allclose(su_rates(joint, two_su), [0.0, 0.0])

    def test_uniform_idle_rate(self, two_su):
        q_e = (np.array([0.0, 0.1, 0.1, 0.1, 0.1]), np.zeros(5))
        q_b = (np.array([0.6, 0, 0, 0, 0]), np.zeros(5))
        assert_allclose(su_rates(JointPolicy(q_e=q_e, q_b=q_b), two_su)[0], 0.26)

    def test_conditional_rate_matches_joint(self, five_su):
        joint = random_joint(five_su, np.random.default_rng(8))
        assert_allclose(su_rates_conditional(to_conditional(joint), five_su), su_rates(joint, five_su),
                        rtol=0, atol=1e-14)

    @pytest.mark.parametrize('su, level, expected', [(0, 0, 0.4), (0, 4, 0.8), (1, 4, 0.8)])
    def test_service_rate_point_mass(self, two_su, su, level, expected):
        cond = ConditionalPolicy(0.5, point_mass(two_su, su, level), point_mass(two_su, 0, 0))
        assert_allclose(pu_service_rate(cond, two_su), expected)

    def test_service_rate_uniform(self, two_su):
        busy = (np.full(5, 0.2), np.zeros(5))
        cond = ConditionalPolicy(0.5, busy, point_mass(two_su, 0, 0))
        assert_allclose(pu_service_rate(cond, two_su), 0.6)

    def test_power_of_level_zero_policy(self, five_su):
        level_zero = tuple(np.eye(1, 5, 0).ravel() * 0.1 for _ in range(5))
        joint = JointPolicy(q_e=level_zero, q_b=level_zero)
        assert_allclose(avg_power(joint, five_su), np.zeros(5))

    def test_mixed_power(self, two_su):
        q_b = (np.array([0, 0, 0, 0, 0.5]), np.zeros(5))
        q_e = (np.array([0, 0, 0.5, 0, 0]), np.zeros(5))
        joint = JointPolicy(q_e=q_e, q_b=q_b)
        assert_allclose(avg_power(joint, two_su), [0.75, 0.0])
        assert_allclose(pu_rate_joint(joint, two_su), 0.4)

    def test_little_busy_probability(self, two_su):
        cond = ConditionalPolicy(0.9, point_mass(two_su, 0, 4), point_mass(two_su, 1, 1))
        assert_allclose(with_little_busy_prob(cond, two_su).busy_prob, 0.3 / 0.8)

    def test_evaluators_are_linear_in_the_policy(self, random_instance):
        rng = np.random.default_rng(12)
        for _ in range(50):
            params = random_instance(rng)
            first, second = random_joint(params, rng), random_joint(params, rng)
            t = float(rng.uniform())
            mixed = JointPolicy.from_vector(params, t * first.flatten() + (1 - t) * second.flatten())
            for evaluator in (su_rates, avg_power):
                assert_allclose(evaluator(mixed, params),
                                t * evaluator(first, params) + (1 - t) * evaluator(second, params),
                                rtol=0, atol=1e-12)
            assert abs(pu_rate_joint(mixed, params)
                       - t * pu_rate_joint(first, params) - (1 - t) * pu_rate_joint(second, params)) <= 1e-12

    def test_little_busy_probability_balances_pu_queue(self, random_instance):
        rng = np.random.default_rng(13)
        for _ in range(50):
            params = random_instance(rng)
            cond = ConditionalPolicy(float(rng.uniform()), params.split(rng.dirichlet(np.ones(params.block_size))),
                                     params.split(rng.dirichlet(np.ones(params.block_size))))
            service = pu_service_rate(cond, params)
            params = params.with_arrival_rate(float(rng.uniform()) * service)
            balanced = with_little_busy_prob(cond, params)
            assert 0.0 <= balanced.busy_prob <= 1.0
            assert abs(balanced.busy_prob * service - params.pu_arrival_rate) <= 1e-12
            assert abs(pu_rate_joint(to_joint(balanced), params) - params.pu_arrival_rate) <= 1e-12

    def test_wrong_table_shape(self, two_su):
        joint = JointPolicy(q_e=(np.ones(1),), q_b=(np.zeros(1),))
        with pytest.raises(DimensionError):
            su_rates(joint, two_su)
