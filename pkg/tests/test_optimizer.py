"""
Tests for solvers/objectives.py and solvers/optimizer.py
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from solvers.objectives import LogUtility, Objective, Saturated, WeightedSum, parse_objective
from solvers.optimizer import (admission_probabilities, maximize_over, solve_opt0,
                               solve_throughput)
from solvers.polytope import joint_polytope
from solvers.regions import rate_region_boundary
from utils.errors import ConfigError, DimensionError, InfeasibleError


class SquaredRate(Objective):
    kind = 'squared'

    @property
    def is_concave(self):
        return False

    def component(self, s, rate, num_sus):
        return rate * rate

    def component_derivative(self, s, rate, num_sus):
        return 2.0 * rate


class TestObjectives:
    def test_weighted_sum(self):
        objective = WeightedSum((1.0, 2.0))
        assert objective.value([0.1, 0.2]) == pytest.approx(0.5)
        assert_allclose(objective.gradient([0.3, 0.3]), [1.0, 2.0])
        assert WeightedSum().value([0.1, 0.2, 0.3]) == pytest.approx(0.6)

    def test_log_gradient_matches_central_difference(self):
        rng = np.random.default_rng(31)
        h = 1e-6
        for _ in range(20):
            num_sus = int(rng.integers(1, 6))
            objective = LogUtility(weights=tuple(rng.uniform(0.1, 2.0, num_sus)))
            rates = rng.uniform(0.05, 1.0, num_sus)
            grad = objective.gradient(rates)
            for s in range(num_sus):
                step = np.eye(num_sus)[s] * h
                numeric = (objective.value(rates + step) - objective.value(rates - step)) / (2 * h)
                assert abs(numeric - grad[s]) <= 1e-5 * abs(grad[s])

    def test_log_utility_is_finite_at_zero(self):
        objective = LogUtility()
        assert np.isfinite(objective.value([0.0, 0.0]))
        assert_allclose(objective.gradient([0.0]), [1e6])

    def test_saturated_caps_rates(self):
        objective = Saturated(WeightedSum(), (0.1, 0.5))
        assert objective.value([0.3, 0.3]) == pytest.approx(0.4)
        assert_allclose(objective.gradient([0.3, 0.3]), [0.0, 1.0])
        assert objective.is_linear

    def test_saturated_validation(self):
        with pytest.raises(ConfigError):
            Saturated(Saturated(WeightedSum(), (1.0,)), (1.0,))
        with pytest.raises(ConfigError):
            Saturated(WeightedSum(), (-0.1,))
        with pytest.raises(DimensionError):
            Saturated(WeightedSum(), (0.1, 0.2)).validate(3)

    def test_bad_parameters(self):
        with pytest.raises(ConfigError):
            WeightedSum((1.0, -1.0))
        with pytest.raises(ConfigError):
            LogUtility(offset=0.0)
        with pytest.raises(DimensionError):
            WeightedSum((1.0, 1.0)).validate(3)

    def test_parse_objective(self):
        assert isinstance(parse_objective('sum'), WeightedSum)
        assert parse_objective('weighted', [1.0, 2.0]).weights == (1.0, 2.0)
        assert parse_objective('log', offset=1e-3).offset == 1e-3
        with pytest.raises(ConfigError):
            parse_objective('weighted')
        with pytest.raises(ConfigError):
            parse_objective('max-min')

    def test_non_concave_objective_is_rejected(self, two_su):
        assert WeightedSum().is_concave and LogUtility().is_concave
        assert not Saturated(SquaredRate(), (0.5, 0.5)).is_concave
        with pytest.raises(ConfigError, match='not concave'):
            solve_opt0(two_su, SquaredRate())
        with pytest.raises(ConfigError, match='not concave'):
            solve_opt0(two_su, Saturated(SquaredRate(), (0.5, 0.5)))


class TestLinearSolve:
    def test_reference_sum_rate(self, two_su):
        report = solve_opt0(two_su, WeightedSum())
        assert report.converged
        assert report.method == 'lp'
        assert report.policy.check(1e-9) is report.policy
        assert report.residuals['pu_rate_residual'] <= 1e-8
        assert report.residuals['min_power_slack'] >= -1e-9
        point = rate_region_boundary(two_su, 0.3, [[1.0, 1.0]])[0]
        assert abs(report.objective_value - point.value) <= 1e-12

    def test_zero_load_small_budget(self, two_su):
        params = two_su.with_budget([0.1, 0.1]).with_arrival_rate(0.0)
        report = solve_opt0(params, WeightedSum())
        assert abs(report.objective_value - 0.24) <= 1e-9
        assert report.policy.busy_mass <= 1e-12

        single = solve_opt0(params, WeightedSum((1.0, 0.0)))
        assert abs(single.objective_value - 0.12) <= 1e-9

    @pytest.mark.parametrize('instance, threshold', [('two_su', 0.8), ('five_su', 0.7)])
    def test_at_threshold_no_idle_mass(self, request, instance, threshold):
        params = request.getfixturevalue(instance).with_arrival_rate(threshold)
        report = solve_opt0(params, WeightedSum())
        assert abs(report.objective_value) <= 1e-9
        assert report.policy.idle_mass <= 1e-9

    def test_past_threshold(self, two_su):
        with pytest.raises(InfeasibleError) as info:
            solve_opt0(two_su.with_arrival_rate(0.85), WeightedSum())
        assert info.value.details['max_stable_rate'] == pytest.approx(0.8)

    def test_value_decreases_with_load(self, five_su):
        values = [solve_opt0(five_su.with_arrival_rate(lam), WeightedSum()).objective_value
                  for lam in (0.0, 0.2, 0.4, 0.6, 0.7)]
        assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))

    def test_report_dict(self, two_su):
        data = solve_opt0(two_su, WeightedSum()).to_dict()
        assert data['status'] == 'optimal'
        assert data['sum_rate'] == pytest.approx(data['objective_value'])
        assert set(data['policy']) == {'q_e', 'q_b'}

    def test_unknown_method(self, two_su):
        with pytest.raises(ConfigError):
            solve_opt0(two_su, WeightedSum(), method='interior-point')
        with pytest.raises(ConfigError):
            solve_opt0(two_su, LogUtility(), method='lp')
        with pytest.raises(ConfigError):
            solve_opt0(two_su, LogUtility(), step='fixed')


class TestFrankWolfe:
    def test_linear_objective_agrees_with_simplex(self, two_su):
        polytope = joint_polytope(two_su)
        lp = maximize_over(polytope, WeightedSum((1.0, 0.5)), method='lp')
        fw = maximize_over(polytope, WeightedSum((1.0, 0.5)), method='frank-wolfe')
        assert fw.status == 'optimal'
        assert lp.value - fw.value <= 1e-6
        assert fw.value <= lp.value + 1e-12

    def test_log_utility_on_symmetric_instance(self, two_su):
        report = solve_opt0(two_su, LogUtility())
        assert report.converged
        assert report.method == 'frank-wolfe/line-search'
        assert report.gap <= 1e-6
        assert abs(report.rates[0] - report.rates[1]) <= 1e-2
        assert report.rates.min() > 0.1

    def test_log_utility_beats_sum_rate_policy(self, two_su):
        fair = solve_opt0(two_su, LogUtility())
        greedy = solve_opt0(two_su, WeightedSum((1.0, 0.0)))
        objective = LogUtility()
        assert fair.objective_value >= objective.value(greedy.rates) - 1e-9

    def test_open_loop_steps_get_close(self, two_su):
        line = solve_opt0(two_su, LogUtility())
        open_loop = solve_opt0(two_su, LogUtility(), step='open-loop', tol=1e-3, max_iter=5_000)
        assert open_loop.method == 'frank-wolfe/open-loop'
        assert open_loop.objective_value <= line.objective_value + 1e-6
        assert line.objective_value - open_loop.objective_value <= 1e-2

    @pytest.mark.slow
    def test_log_utility_on_five_sus(self, five_su):
        report = solve_opt0(five_su, LogUtility())
        assert report.converged
        assert report.rates.max() - report.rates.min() <= 1e-2


class TestThroughput:
    @pytest.mark.parametrize('lam', [0.2, 0.3, 0.4, 0.5, 0.6])
    def test_light_arrivals_are_fully_served(self, five_su, lam):
        result = solve_throughput(five_su.with_arrival_rate(lam), [0.01] * 5, WeightedSum())
        assert abs(result.report.objective_value - 0.05) <= 1e-9
        assert_allclose(result.throughputs, [0.01] * 5, atol=1e-9)
        assert_allclose(result.admission, np.ones(5), atol=1e-9)

    def test_no_room_at_threshold(self, five_su):
        result = solve_throughput(five_su.with_arrival_rate(0.7), [0.01] * 5, WeightedSum())
        assert abs(result.report.objective_value) <= 1e-9
        assert_allclose(result.throughputs, np.zeros(5), atol=1e-9)

    def test_heavy_arrivals_match_unconstrained_optimum(self, five_su):
        capped = solve_throughput(five_su, [0.2] * 5, WeightedSum())
        free = solve_opt0(five_su, WeightedSum())
        assert abs(capped.report.objective_value - free.objective_value) <= 1e-7

    def test_report_dict(self, five_su):
        data = solve_throughput(five_su, [0.01] * 5, WeightedSum()).to_dict()
        assert len(data['admission_probabilities']) == 5
        assert data['arrival_rates'] == [0.01] * 5

    def test_bad_arrivals(self, five_su):
        with pytest.raises(ConfigError):
            solve_throughput(five_su, [0.01] * 4, WeightedSum())
        with pytest.raises(ConfigError):
            solve_throughput(five_su, [-0.01] + [0.01] * 4, WeightedSum())

    def test_admission_probabilities(self):
        assert_allclose(admission_probabilities([0.0, 0.1, 0.2], [0.05, 0.05, 0.3]), [1.0, 0.5, 1.0])
