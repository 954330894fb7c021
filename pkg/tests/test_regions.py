"""
Tests for solvers/regions.py: stability threshold, rate-region support
points, the relaxed-priority class and its conversion back to sensing-only
policies.
"""

from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose

from model.evaluators import avg_power, pu_rate_joint, su_rates
from model.params import make_params, symmetric_params
from model.policy import C2Policy
from solvers.objectives import WeightedSum
from solvers.optimizer import solve_opt0
from solvers.regions import (c2_max_weighted_rate, conversion_summary, convert_c2_to_c0,
                             max_stable_rate, quarter_circle_directions, rate_region_boundary,
                             solve_c2, stabilizing_policy)
from utils.errors import ConfigError, InfeasibleError

LEVELS = [0.0, 0.25, 0.5, 0.75, 1.0]
SU = [0.0, 0.3, 0.5, 0.8, 1.0]
COOP = [0.4, 0.5, 0.6, 0.7, 0.8]


class TestStability:
    def test_no_budget_means_no_cooperation(self, five_su):
        assert_allclose(max_stable_rate(five_su.with_budget([0.0] * 5)).value, 0.4, atol=1e-12)

    def test_single_su(self, single_su):
        assert_allclose(max_stable_rate(single_su).value, 0.6, atol=1e-12)

    def test_reference_instances(self, two_su, five_su):
        assert_allclose(max_stable_rate(two_su).value, 0.8, atol=1e-12)
        assert_allclose(max_stable_rate(five_su).value, 0.7, atol=1e-12)

    def test_arrival_rate_is_ignored(self, five_su):
        assert max_stable_rate(five_su).value == max_stable_rate(five_su.with_arrival_rate(0.0)).value

    def test_certificate(self, five_su):
        result = max_stable_rate(five_su)
        data = result.to_dict()
        assert len(data['certificate']['busy_block']) == 5
        assert len(data['certificate']['power_duals']) == 5
        cert = np.concatenate(result.busy_block)
        assert cert.sum() <= 1.0 + 1e-12
        assert_allclose(cert @ five_su.flat(five_su.coop_success), result.value)

    def test_stabilizing_policy(self, five_su):
        params = five_su.with_arrival_rate(0.55)
        policy = stabilizing_policy(params).check()
        assert_allclose(pu_rate_joint(policy, params), 0.55, atol=1e-12)
        assert np.all(avg_power(policy, params) <= params.power_budget + 1e-12)

    def test_threshold_grows_with_budget_and_relay_success(self, random_instance):
        rng = np.random.default_rng(5)
        for _ in range(50):
            params = random_instance(rng)
            base = max_stable_rate(params).value

            richer = params.with_budget(params.power_budget + rng.uniform(0.0, 0.3, params.num_sus))
            assert max_stable_rate(richer).value >= base - 1e-12

            s = int(rng.integers(params.num_sus))
            row = params.coop_success[s].copy()
            row[int(rng.integers(len(row)))] += float(rng.uniform(0.0, 0.2))
            tables = list(params.coop_success)
            tables[s] = np.minimum(np.maximum.accumulate(row), 1.0)
            stronger = replace(params, coop_success=tuple(tables))
            assert max_stable_rate(stronger).value >= base - 1e-12

    def test_stabilizing_policy_past_threshold(self, five_su):
        with pytest.raises(InfeasibleError):
            stabilizing_policy(five_su.with_arrival_rate(0.71))


class TestRateRegion:
    def test_axis_direction(self, two_su):
        point = rate_region_boundary(two_su, 0.3, [[1.0, 0.0]])[0]
        assert abs(point.rates[1]) <= 1e-9
        assert_allclose(point.rates[0], 0.525, atol=1e-9)

    def test_permuted_instance_has_mirrored_values(self):
        first = ([0.0, 0.2, 0.7], [0.0, 0.4, 0.9], [0.3, 0.5, 0.9])
        second = ([0.0, 0.5, 1.0, 1.5], [0.0, 0.2, 0.6, 0.7], [0.3, 0.4, 0.6, 0.95])
        params = make_params(*zip(first, second), 0.3, [0.3, 0.4])
        swapped = make_params(*zip(second, first), 0.3, [0.4, 0.3])
        for w in ([1.0, 1.0], [0.3, 0.7], [2.0, 0.5]):
            a = rate_region_boundary(params, 0.35, [w])[0]
            b = rate_region_boundary(swapped, 0.35, [w[::-1]])[0]
            assert abs(a.value - b.value) <= 1e-9

    def test_symmetric_instance_symmetric_value(self, two_su):
        point = rate_region_boundary(two_su, 0.3, [[1.0, 1.0]])[0]
        opt = solve_opt0(two_su, WeightedSum())
        assert abs(point.value - opt.objective_value) <= 1e-12

    def test_sweep_is_monotone(self, two_su):
        directions = quarter_circle_directions(33)
        assert_allclose(directions[0], [1.0, 0.0])
        assert_allclose(directions[-1], [0.0, 1.0], atol=1e-12)
        points = rate_region_boundary(two_su, 0.3, directions)
        first = [p.rates[0] for p in points]
        second = [p.rates[1] for p in points]
        assert all(b <= a + 1e-9 for a, b in zip(first, first[1:]))
        assert all(b >= a - 1e-9 for a, b in zip(second, second[1:]))

    def test_rows(self, two_su):
        row = rate_region_boundary(two_su, 0.3, [[0.5, 0.5]])[0].to_row()
        assert set(row) == {'w1', 'w2', 'r1', 'r2', 'value'}

    @pytest.mark.parametrize('direction', [[1.0], [0.0, 0.0], [-1.0, 1.0]])
    def test_bad_directions(self, two_su, direction):
        with pytest.raises(ConfigError):
            rate_region_boundary(two_su, 0.3, [direction])

    def test_too_few_directions(self):
        with pytest.raises(ConfigError):
            quarter_circle_directions(1)


class TestRelaxedPriority:
    def test_zero_load_matches(self, two_su):
        params = two_su.with_arrival_rate(0.0)
        c2 = c2_max_weighted_rate(params, 0.0, [1.0, 1.0])
        assert abs(c2 - solve_opt0(params, WeightedSum()).objective_value) <= 1e-9

    def test_reference_instance_matches(self, two_su):
        c2 = c2_max_weighted_rate(two_su, 0.3, [1.0, 1.0])
        assert abs(c2 - solve_opt0(two_su, WeightedSum()).objective_value) <= 1e-7

    def test_random_instances_match(self, random_instance):
        rng = np.random.default_rng(77)
        for _ in range(50):
            params = random_instance(rng)
            weights = rng.uniform(0.0, 1.0, params.num_sus)
            weights[rng.integers(params.num_sus)] += 0.1
            c0 = solve_opt0(params, WeightedSum(tuple(weights))).objective_value
            c2 = c2_max_weighted_rate(params, params.pu_arrival_rate, weights)
            assert abs(c0 - c2) <= 1e-7

    def test_past_threshold_is_infeasible(self, two_su):
        with pytest.raises(InfeasibleError):
            solve_c2(two_su, 0.8 + 1e-6, [1.0, 1.0])
        with pytest.raises(InfeasibleError):
            solve_opt0(two_su.with_arrival_rate(0.8 + 1e-6), WeightedSum())


class TestConversion:
    @pytest.fixture
    def one_su(self):
        return symmetric_params(1, LEVELS, SU, COOP, 0.4, 1.0)

    def test_solver_output_converts(self, two_su):
        _, p = solve_c2(two_su, 0.3, [1.0, 1.0])
        joint = convert_c2_to_c0(p.check(), two_su, 0.3).check(1e-9)
        assert abs(pu_rate_joint(joint, two_su) - 0.3) <= 1e-9
        assert_allclose(su_rates(joint, two_su), conversion_summary(p, joint, two_su)['c2_rates'],
                        rtol=0, atol=1e-12)

    def test_exact_service_is_kept(self, two_su):
        p = C2Policy(p1=[np.array([0, 0, 0, 0, 0.375]), np.zeros(5)],
                     p0=[np.zeros(5), np.array([0.0, 0.0, 0.625 - 0.5, 0.0, 0.5])])
        joint = convert_c2_to_c0(p, two_su.with_budget([0.5, 1.0]), 0.3)
        for got, want in zip(joint.q_b, p.p1):
            assert np.array_equal(got, want)
        for got, want in zip(joint.q_e, p.p0):
            assert np.array_equal(got, want)

    def test_shrinks_cooperation_toward_level_zero(self, one_su):
        p = C2Policy(p1=[np.array([0, 0, 0, 0, 1.0])], p0=[np.zeros(5)])
        joint = convert_c2_to_c0(p, one_su, 0.6)
        assert_allclose(joint.q_b[0], [0.5, 0, 0, 0, 0.5])
        assert_allclose(joint.q_e[0], np.zeros(5))
        assert_allclose(pu_rate_joint(joint, one_su), 0.6)

    def test_moves_busy_mass_to_idle(self, one_su):
        p = C2Policy(p1=[np.array([0.5, 0, 0, 0, 0])], p0=[np.array([0.5, 0, 0, 0, 0])])
        joint = convert_c2_to_c0(p, one_su, 0.1)
        assert_allclose(joint.q_b[0], [0.25, 0, 0, 0, 0])
        assert_allclose(joint.q_e[0], [0.75, 0, 0, 0, 0])
        assert_allclose(joint.total_mass, 1.0)
        assert_allclose(pu_rate_joint(joint, one_su), 0.1)

    def test_under_served_pu_is_rejected(self, one_su):
        p = C2Policy(p1=[np.array([0.5, 0, 0, 0, 0])], p0=[np.array([0.5, 0, 0, 0, 0])])
        with pytest.raises(InfeasibleError):
            convert_c2_to_c0(p, one_su, 0.3)

    def test_random_policies(self, random_instance):
        rng = np.random.default_rng(99)
        for _ in range(100):
            base = random_instance(rng)
            n = base.block_size
            vector = rng.dirichlet(np.ones(2 * n))
            p = C2Policy(p1=base.split(vector[n:]), p0=base.split(vector[:n]))
            powers = np.array([np.dot(a + b, lv) for a, b, lv in zip(p.p0, p.p1, base.power_levels)])
            params = base.with_budget(powers + 1e-3)
            served = sum(float(np.dot(t, r)) for t, r in zip(p.p1, params.coop_success))
            lam = rng.uniform(0.0, 1.0) * served

            joint = convert_c2_to_c0(p, params, lam)
            summary = conversion_summary(p, joint, params)

            assert np.all(joint.flatten() >= -1e-12)
            assert abs(joint.total_mass - 1.0) <= 1e-9
            assert abs(pu_rate_joint(joint, params) - lam) <= 1e-9
            assert_allclose(summary['c0_rates'], summary['c2_rates'], rtol=0, atol=1e-12)
            assert np.all(np.array(summary['c0_powers']) <= np.array(summary['c2_powers']) + 1e-12)
            assert np.all(avg_power(joint, params) <= params.power_budget + 1e-9)
            assert_allclose(su_rates(joint, params), summary['c2_rates'], rtol=0, atol=1e-12)
