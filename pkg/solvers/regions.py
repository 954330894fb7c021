"""
Stability region of the PU queue and SU rate-region analysis.

The maximum stable PU rate λ̂ is the value of an LP over busy-slot cooperation
probabilities alone. Rate-region points are support values of the achievable
rate region in given weight directions. The C₂ program drops the PU priority
constraint and only asks for r̄_p >= λ_p; ``convert_c2_to_c0`` turns any of its
feasible policies into a C₀ policy with the same SU rates.
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from model.evaluators import avg_power, su_rates
from model.params import SystemParams
from model.policy import C2Policy, JointPolicy
from solvers.linprog import OPTIMAL, LpProblem, LpSolution, solve_lp
from solvers.objectives import WeightedSum
from solvers.optimizer import maximize_over, solve_opt0
from solvers.polytope import block_rows, joint_polytope
from utils.errors import ConfigError, InfeasibleError, InvalidPolicyError, NumericError

logger = logging.getLogger(__name__)

EQUALITY_BAND = 1e-12
POLICY_TOL = 1e-9


@dataclass
class StabilityResult:
    """λ̂ and the LP certificate: busy-slot cooperation probabilities x̂ and row duals."""
    value: float
    busy_block: Tuple[np.ndarray, ...]
    lp: LpSolution

    def to_dict(self) -> dict:
        return {
            'max_stable_rate': self.value,
            'certificate': {
                'busy_block': [b.tolist() for b in self.busy_block],
                'power_duals': self.lp.duals_ub[:-1].tolist(),
                'mass_dual': float(self.lp.duals_ub[-1]),
                'pivots': self.lp.iterations,
            },
        }


@dataclass
class RegionPoint:
    direction: np.ndarray
    rates: np.ndarray
    value: float

    def to_row(self) -> dict:
        row = {f"w{s + 1}": float(w) for s, w in enumerate(self.direction)}
        row.update({f"r{s + 1}": float(r) for s, r in enumerate(self.rates)})
        row['value'] = self.value
        return row


def stability_lp(params: SystemParams) -> LpProblem:
    """maximize Σ r_p(s,i)·x(s,i) s.t. Σ_i P_s(i)·x(s,i) <= P̂_s, Σ x <= 1, x >= 0."""
    n = params.block_size
    power = block_rows(params, params.power_levels, 0, n)
    a_ub = np.vstack([power, np.ones((1, n))])
    b_ub = np.concatenate([params.power_budget, [1.0]])
    return LpProblem(c=params.flat(params.coop_success), a_ub=a_ub, b_ub=b_ub)


def max_stable_rate(params: SystemParams) -> StabilityResult:
    """Largest PU arrival rate that some admissible policy keeps stable (λ_p is ignored)."""
    solution = solve_lp(stability_lp(params))
    if solution.status != OPTIMAL:
        raise NumericError(f"stability LP returned {solution.status}")
    value = solution.objective
    logger.debug(f"maximum stable rate {value:.12g} after {solution.iterations} pivots")
    return StabilityResult(value=value, busy_block=params.split(solution.x), lp=solution)


def stabilizing_policy(params: SystemParams, stability: StabilityResult = None) -> JointPolicy:
    """
    Scale the stability certificate to the PU load: q_b = (λ_p/λ̂)·x̂, with the
    rest of the probability mass on idle level 0 of the first SU.
    """
    stability = stability or max_stable_rate(params)
    lam = params.pu_arrival_rate
    if lam > stability.value + POLICY_TOL:
        raise InfeasibleError(f"λ_p={lam} exceeds the maximum stable rate {stability.value:.6g}")
    x_hat = params.flat(stability.busy_block)
    busy = (lam / stability.value) * x_hat if stability.value > 0 else np.zeros_like(x_hat)
    idle = np.zeros_like(busy)
    idle[0] = max(1.0 - float(np.sum(busy)), 0.0)
    return JointPolicy(q_e=params.split(idle), q_b=params.split(busy))


def rate_region_boundary(params: SystemParams, pu_arrival_rate: float,
                         directions: Sequence[Sequence[float]]) -> List[RegionPoint]:
    """Support points of the achievable SU rate region at PU load ``pu_arrival_rate``."""
    params = params.with_arrival_rate(pu_arrival_rate)
    points = []
    for w in directions:
        w = np.asarray(w, dtype=float)
        if w.shape != (params.num_sus,) or np.any(w < 0) or not np.any(w > 0):
            raise ConfigError(f"direction {w.tolist()} must be nonnegative, nonzero, of length {params.num_sus}")
        report = solve_opt0(params, WeightedSum(tuple(w)))
        points.append(RegionPoint(direction=w, rates=report.rates, value=report.objective_value))
    return points


def quarter_circle_directions(count: int) -> List[np.ndarray]:
    """``count`` two-SU directions (cos θ, sin θ) for θ from 0 to π/2."""
    if count < 2:
        raise ConfigError("a sweep needs at least two directions")
    angles = np.linspace(0.0, np.pi / 2.0, count)
    return [np.array([np.cos(a), np.sin(a)]).clip(min=0.0) for a in angles]


def solve_c2(params: SystemParams, pu_arrival_rate: float,
             weights: Sequence[float]) -> Tuple[float, C2Policy]:
    """Best weighted SU rate over C₂ policies with r̄_p >= λ_p and the power caps."""
    params = params.with_arrival_rate(pu_arrival_rate)
    w = WeightedSum(tuple(weights))
    w.validate(params.num_sus)
    try:
        optimum = maximize_over(joint_polytope(params, pu_rate_sense='ge'), w, method='lp')
    except InfeasibleError:
        raise InfeasibleError(f"no C2 policy serves λ_p={params.pu_arrival_rate}")
    return optimum.value, C2Policy.from_vector(params, optimum.x)


def c2_max_weighted_rate(params: SystemParams, pu_arrival_rate: float,
                         weights: Sequence[float]) -> float:
    return solve_c2(params, pu_arrival_rate, weights)[0]


def _c2_rates(p: C2Policy, params: SystemParams) -> np.ndarray:
    return np.array([float(np.dot(p0, r)) for p0, r in zip(p.p0, params.su_success)])


def _check_c2_feasible(p: C2Policy, params: SystemParams, lam: float) -> float:
    params.check_tables(p.p1, 'p1')
    p.check(POLICY_TOL)
    pu_rate = float(sum(np.dot(p1, r) for p1, r in zip(p.p1, params.coop_success)))
    if pu_rate < lam - POLICY_TOL:
        raise InfeasibleError(f"C2 policy serves the PU at {pu_rate:.9g} < λ_p={lam}")
    power = np.array([float(np.dot(a + b, levels))
                      for a, b, levels in zip(p.p0, p.p1, params.power_levels)])
    if np.any(power > params.power_budget + POLICY_TOL):
        raise InfeasibleError("C2 policy exceeds a power budget", {'powers': power.tolist()})
    return pu_rate


def convert_c2_to_c0(p: C2Policy, params: SystemParams, pu_arrival_rate: float) -> JointPolicy:
    """
    Build a C₀ joint policy with the same SU rates as ``p`` that serves the PU at
    exactly λ_p, by moving busy-slot mass to level 0 (no power) and, when even
    level-0 busy mass over-serves the PU, converting some of it into idle
    level-0 mass.

    Raises:
        InfeasibleError: ``p`` under-serves the PU or breaks a power budget
    """
    lam = pu_arrival_rate
    pu_rate = _check_c2_feasible(p, params, lam)
    solo = params.solo_success
    pu_share = p.pu_share

    if pu_rate - lam <= EQUALITY_BAND:
        return JointPolicy(q_e=p.p0, q_b=p.p1)

    solo_rate = solo * pu_share
    if lam >= solo_rate - EQUALITY_BAND:
        alpha = (lam - solo_rate) / (pu_rate - solo_rate)
        q_b = []
        for row in p.p1:
            busy = alpha * row
            busy[0] = alpha * row[0] + (1.0 - alpha) * float(np.sum(row))
            q_b.append(busy)
        return JointPolicy(q_e=p.p0, q_b=tuple(q_b))

    if pu_share >= 1.0:
        raise InvalidPolicyError("C2 policy with p(1)=1 cannot over-serve the PU at level 0 only")
    scale = lam / solo_rate
    beta = (1.0 - lam / solo) / (1.0 - pu_share) - 1.0
    q_b = []
    q_e = []
    for p1_row, p0_row in zip(p.p1, p.p0):
        busy = np.zeros_like(p1_row)
        busy[0] = scale * float(np.sum(p1_row))
        q_b.append(busy)
        idle = p0_row.copy()
        idle[0] = beta * float(np.sum(p0_row)) + p0_row[0]
        q_e.append(idle)
    return JointPolicy(q_e=tuple(q_e), q_b=tuple(q_b))


def conversion_summary(p: C2Policy, converted: JointPolicy, params: SystemParams) -> dict:
    """Rates and powers before and after conversion."""
    return {
        'c2_rates': _c2_rates(p, params).tolist(),
        'c0_rates': su_rates(converted, params).tolist(),
        'c2_powers': [float(np.dot(a + b, lv)) for a, b, lv in zip(p.p0, p.p1, params.power_levels)],
        'c0_powers': avg_power(converted, params).tolist(),
    }
