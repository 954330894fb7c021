"""
Centralized policy optimization.

Linear objectives are solved exactly with the simplex. Concave objectives use
Frank–Wolfe over the same polytope, with the simplex as the linear
minimization oracle and the Frank–Wolfe gap as the optimality certificate.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from model.evaluators import avg_power, pu_rate_joint, su_rates
from model.params import SystemParams
from model.policy import JointPolicy
from solvers.linprog import INFEASIBLE, OPTIMAL, LpSolution, solve_lp
from solvers.objectives import Objective, Saturated, WeightedSum
from solvers.polytope import PolicyPolytope, joint_polytope
from utils.errors import ConfigError, InfeasibleError, NumericError

logger = logging.getLogger(__name__)

FW_GAP_TOL = 1e-6
FW_MAX_ITER = 100_000
LINE_SEARCH_STEPS = 60

PU_ROW_TOL = 1e-8
MASS_TOL = 1e-9
SLACK_TOL = 1e-9

STATUS_OPTIMAL = 'optimal'
STATUS_NOT_CONVERGED = 'not_converged'


@dataclass
class PolytopeOptimum:
    """Maximizer of an objective over a PolicyPolytope."""
    x: np.ndarray
    rates: np.ndarray
    value: float
    status: str
    iterations: int
    method: str
    gap: float = 0.0
    lp: Optional[LpSolution] = None


@dataclass
class SolveReport:
    """Optimal joint policy together with its evaluated rates and powers."""
    policy: JointPolicy
    objective_value: float
    rates: np.ndarray
    powers: np.ndarray
    status: str
    iterations: int
    method: str = 'lp'
    gap: float = 0.0
    residuals: Dict[str, float] = field(default_factory=dict)
    duals: Dict[str, List[float]] = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.status == STATUS_OPTIMAL

    def to_dict(self) -> dict:
        return {
            'status': self.status,
            'method': self.method,
            'objective_value': self.objective_value,
            'rates': self.rates.tolist(),
            'sum_rate': float(np.sum(self.rates)),
            'powers': self.powers.tolist(),
            'idle_mass': self.policy.idle_mass,
            'busy_mass': self.policy.busy_mass,
            'iterations': self.iterations,
            'frank_wolfe_gap': self.gap,
            'residuals': self.residuals,
            'duals': self.duals,
            'policy': self.policy.to_dict(),
        }


@dataclass
class ThroughputReport:
    """Solve with exogenous SU arrivals: capped throughputs and admission probabilities."""
    report: SolveReport
    arrival_rates: np.ndarray
    throughputs: np.ndarray
    admission: np.ndarray

    def to_dict(self) -> dict:
        data = self.report.to_dict()
        data.update({
            'arrival_rates': self.arrival_rates.tolist(),
            'throughputs': self.throughputs.tolist(),
            'admission_probabilities': self.admission.tolist(),
        })
        return data


def _check_objective(objective: Objective, num_sus: int):
    if not isinstance(objective, Objective):
        raise ConfigError(f"unsupported objective {objective!r}")
    if not objective.is_concave:
        raise ConfigError(f"objective {objective.kind} is not concave")
    objective.validate(num_sus)


def _vertex_key(v: np.ndarray) -> Tuple[float, ...]:
    return tuple(np.round(v, 12).tolist())


def _lmo(polytope: PolicyPolytope, rate_weights: np.ndarray) -> LpSolution:
    solution = solve_lp(polytope.lp(polytope.rate_map.T @ rate_weights))
    if solution.status == INFEASIBLE:
        raise InfeasibleError(f"constraint set {polytope.label} is empty")
    if solution.status != OPTIMAL:
        raise NumericError(f"linear oracle returned {solution.status} on a bounded polytope")
    return solution


def _line_search(objective: Objective, rates: np.ndarray, rate_step: np.ndarray,
                 max_step: float) -> float:
    """argmax over γ in [0, max_step] of f(rates + γ·rate_step), f concave."""
    def slope(gamma):
        return float(objective.gradient(rates + gamma * rate_step) @ rate_step)

    if slope(max_step) >= 0.0:
        return max_step
    if slope(0.0) <= 0.0:
        return 0.0
    lo, hi = 0.0, max_step
    for _ in range(LINE_SEARCH_STEPS):
        mid = 0.5 * (lo + hi)
        if slope(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return lo


def frank_wolfe(polytope: PolicyPolytope, objective: Objective, step: str = 'line-search',
                tol: float = FW_GAP_TOL, max_iter: int = FW_MAX_ITER) -> PolytopeOptimum:
    """
    Maximize a concave objective of the rates over ``polytope``.

    Args:
        step: ``line-search`` (away-step variant with exact line search) or
              ``open-loop`` (plain steps of size 2/(k+2))
        tol: stop once the Frank–Wolfe gap, an upper bound on the
             suboptimality, is at most this value
    """
    if step not in ('line-search', 'open-loop'):
        raise ConfigError(f"unknown Frank-Wolfe step rule {step!r}")
    num_sus = polytope.rate_map.shape[0]

    # start from the average of the per-SU rate maximizers so every rate that can be positive is
    active: Dict[Tuple[float, ...], List] = {}
    for s in range(num_sus):
        vertex = _lmo(polytope, np.eye(num_sus)[s]).x
        key = _vertex_key(vertex)
        if key in active:
            active[key][1] += 1.0 / num_sus
        else:
            active[key] = [vertex, 1.0 / num_sus]
    x = sum(w * v for v, w in active.values())

    gap = float('inf')
    iterations = 0
    for k in range(max_iter):
        rates = polytope.rates(x)
        grad_rates = objective.gradient(rates)
        if not np.all(np.isfinite(grad_rates)):
            raise NumericError("objective gradient is not finite", {'rates': rates.tolist()})
        grad_x = polytope.rate_map.T @ grad_rates
        fw_vertex = _lmo(polytope, grad_rates).x
        gap = float(grad_x @ (fw_vertex - x))
        iterations = k
        if gap <= tol:
            break

        if step == 'open-loop':
            gamma = 2.0 / (k + 2.0)
            x = x + gamma * (fw_vertex - x)
            continue

        away_key, (away_vertex, away_weight) = min(
            active.items(), key=lambda item: float(grad_x @ item[1][0]))
        away_gap = float(grad_x @ (x - away_vertex))

        if gap >= away_gap or away_weight >= 1.0:
            direction = fw_vertex - x
            gamma = _line_search(objective, rates, polytope.rate_map @ direction, 1.0)
            for entry in active.values():
                entry[1] *= 1.0 - gamma
            key = _vertex_key(fw_vertex)
            if gamma >= 1.0:
                active = {key: [fw_vertex, 1.0]}
            elif key in active:
                active[key][1] += gamma
            else:
                active[key] = [fw_vertex, gamma]
        else:
            max_step = away_weight / (1.0 - away_weight)
            direction = x - away_vertex
            gamma = _line_search(objective, rates, polytope.rate_map @ direction, max_step)
            for entry in active.values():
                entry[1] *= 1.0 + gamma
            active[away_key][1] -= gamma
            if gamma >= max_step or active[away_key][1] <= 1e-15:
                del active[away_key]
        active = {key: entry for key, entry in active.items() if entry[1] > 0.0}
        total = sum(entry[1] for entry in active.values())
        x = sum(entry[1] * entry[0] for entry in active.values()) / total
    else:
        iterations = max_iter

    status = STATUS_OPTIMAL if gap <= tol else STATUS_NOT_CONVERGED
    if status != STATUS_OPTIMAL:
        logger.warning(f"Frank-Wolfe stopped after {iterations} iterations with gap {gap:.3e}")
    rates = polytope.rates(x)
    return PolytopeOptimum(x=x, rates=rates, value=objective.value(rates), status=status,
                           iterations=iterations, method=f"frank-wolfe/{step}", gap=gap)


def maximize_over(polytope: PolicyPolytope, objective: Objective, method: str = 'auto',
                  step: str = 'line-search', tol: float = FW_GAP_TOL,
                  max_iter: int = FW_MAX_ITER) -> PolytopeOptimum:
    """
    Maximize ``objective`` over ``polytope``. Saturated objectives are handled by
    appending throughput variables, so the returned rates are the capped ones.
    """
    if isinstance(objective, Saturated):
        polytope = polytope.with_throughput_caps(objective.caps)
        objective = objective.inner
    if method == 'auto':
        method = 'lp' if objective.is_linear else 'frank-wolfe'

    if method == 'frank-wolfe':
        return frank_wolfe(polytope, objective, step=step, tol=tol, max_iter=max_iter)
    if method != 'lp':
        raise ConfigError(f"unknown solve method {method!r}")
    if not isinstance(objective, WeightedSum):
        raise ConfigError(f"the LP path needs a linear objective, got {objective.kind}")

    num_sus = polytope.rate_map.shape[0]
    solution = solve_lp(polytope.lp(polytope.rate_map.T @ objective.weight_vector(num_sus)))
    if solution.status == INFEASIBLE:
        raise InfeasibleError(f"constraint set {polytope.label} is empty")
    if solution.status != OPTIMAL:
        raise NumericError(f"simplex returned {solution.status} on a bounded polytope")
    rates = polytope.rates(solution.x)
    return PolytopeOptimum(x=solution.x, rates=rates, value=solution.objective, status=STATUS_OPTIMAL,
                           iterations=solution.iterations, method='lp', lp=solution)


def audit_report(report: SolveReport, params: SystemParams) -> Dict[str, float]:
    """Check the PU-rate row, the mass row and the power rows; raise NumericError on failure."""
    policy = report.policy
    residuals = {
        'pu_rate_residual': abs(pu_rate_joint(policy, params) - params.pu_arrival_rate),
        'mass_residual': abs(policy.total_mass - 1.0),
        'min_power_slack': float(np.min(params.power_budget - avg_power(policy, params))),
        'min_entry': float(min(np.min(policy.flatten()), 0.0)),
    }
    failed = []
    if residuals['pu_rate_residual'] > PU_ROW_TOL:
        failed.append('pu_rate_residual')
    if residuals['mass_residual'] > MASS_TOL:
        failed.append('mass_residual')
    if residuals['min_power_slack'] < -SLACK_TOL:
        failed.append('min_power_slack')
    if residuals['min_entry'] < -SLACK_TOL:
        failed.append('min_entry')
    if failed:
        raise NumericError(f"solution audit failed on {', '.join(failed)}", residuals)
    return residuals


def _report(params: SystemParams, objective: Objective, optimum: PolytopeOptimum) -> SolveReport:
    policy = JointPolicy.from_vector(params, optimum.x[:2 * params.block_size]).clipped()
    rates = su_rates(policy, params)
    duals = {}
    if optimum.lp is not None:
        duals = {'eq': optimum.lp.duals_eq.tolist(), 'ub': optimum.lp.duals_ub.tolist()}
    report = SolveReport(policy=policy, objective_value=objective.value(rates), rates=rates,
                         powers=avg_power(policy, params), status=optimum.status,
                         iterations=optimum.iterations, method=optimum.method,
                         gap=optimum.gap, duals=duals)
    report.residuals = audit_report(report, params)
    return report


def solve_opt0(params: SystemParams, objective: Objective, method: str = 'auto',
               step: str = 'line-search', tol: float = FW_GAP_TOL,
               max_iter: int = FW_MAX_ITER) -> SolveReport:
    """
    Best joint policy that serves the PU at exactly its arrival rate within the
    power budgets.

    Concave objectives run Frank-Wolfe with exact line search and away steps by
    default, which reaches the 1e-6 duality gap well inside the iteration cap.
    The plain 2/(k+2) rule is ``step='open-loop'``; its O(1/k) gap usually
    needs a looser ``tol``.

    Raises:
        ConfigError: unsupported or non-concave objective
        InfeasibleError: λ_p exceeds the maximum stable rate
    """
    _check_objective(objective, params.num_sus)
    try:
        optimum = maximize_over(joint_polytope(params), objective, method, step, tol, max_iter)
    except InfeasibleError:
        from solvers.regions import max_stable_rate
        limit = max_stable_rate(params).value
        raise InfeasibleError(
            f"λ_p={params.pu_arrival_rate} exceeds the maximum stable rate {limit:.6g}",
            {'pu_arrival_rate': params.pu_arrival_rate, 'max_stable_rate': limit})
    report = _report(params, objective, optimum)
    logger.info(f"solved {params.name or 'instance'} at λ_p={params.pu_arrival_rate}: "
                f"f={report.objective_value:.9g} ({report.method}, {report.iterations} it)")
    return report


def admission_probabilities(arrival_rates: np.ndarray, rates: np.ndarray) -> np.ndarray:
    """p_s^a = min(λ_s, r̄_s)/λ_s, and 1 for SUs with no arrivals."""
    arrival_rates = np.asarray(arrival_rates, dtype=float)
    admitted = np.minimum(arrival_rates, rates)
    with np.errstate(divide='ignore', invalid='ignore'):
        ratio = np.where(arrival_rates > 0, admitted / np.where(arrival_rates > 0, arrival_rates, 1.0), 1.0)
    return np.clip(ratio, 0.0, 1.0)


def solve_throughput(params: SystemParams, su_arrivals: Sequence[float],
                     objective: Objective, **solve_options) -> ThroughputReport:
    """
    Maximize f(min(λ_s, r̄_s)) for SUs fed by exogenous arrivals, and derive the
    flow-control admission probabilities.
    """
    arrivals = np.asarray(su_arrivals, dtype=float)
    if arrivals.shape != (params.num_sus,) or np.any(arrivals < 0):
        raise ConfigError(f"need {params.num_sus} nonnegative SU arrival rates, got {arrivals.tolist()}")
    capped = objective if isinstance(objective, Saturated) else Saturated(objective, arrivals)
    report = solve_opt0(params, capped, **solve_options)
    throughputs = np.minimum(arrivals, report.rates)
    return ThroughputReport(report=report, arrival_rates=arrivals, throughputs=throughputs,
                            admission=admission_probabilities(arrivals, report.rates))
