"""
Policy optimization under imperfect sensing.

With the busy probability q_b pinned, every constraint is linear in the
conditional tables, so g(q_b) is a convex problem. The outer problem is a
one-dimensional search over q_b restricted to the interval where the PU row
can possibly hold.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from engine.scheduler import Scheduler
from model.params import SystemParams
from model.policy import ConditionalPolicy
from solvers.objectives import Objective
from solvers.optimizer import _check_objective, maximize_over
from solvers.polytope import sensed_polytope
from utils.errors import ConfigError, InfeasibleError, SensingError

logger = logging.getLogger(__name__)

DEFAULT_GRID_POINTS = 201
DEFAULT_QB_TOL = 1e-7
REFINE_TOL = 1e-10
CONCAVITY_TOL = 1e-9
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0

SEARCH_GRID = 'grid'
SEARCH_TERNARY = 'ternary'


@dataclass(frozen=True)
class SensingModel:
    """Detection probability P(sense busy | busy) and false-alarm probability P(sense busy | idle)."""

    p_detect: float = 1.0
    p_false_alarm: float = 0.0

    def __post_init__(self):
        for label, value in (('p_detect', self.p_detect), ('p_false_alarm', self.p_false_alarm)):
            if not (0.0 <= value <= 1.0):
                raise ConfigError(f"{label}={value} outside [0,1]")

    @property
    def is_perfect(self) -> bool:
        return self.p_detect == 1.0 and self.p_false_alarm == 0.0


@dataclass
class GValue:
    """g(q_b): best objective with the busy probability pinned (nan when infeasible)."""
    busy_prob: float
    value: float
    feasible: bool
    policy: Optional[ConditionalPolicy] = None
    rates: Optional[np.ndarray] = None


@dataclass
class SensingSolveReport:
    busy_prob: float
    value: float
    policy: ConditionalPolicy
    rates: np.ndarray
    powers: np.ndarray
    interval: Tuple[float, float]
    curve: List[Tuple[float, float]]
    search: str
    concavity_violations: int = 0
    concavity_checked: int = 0
    evaluations: int = 0
    details: Dict[str, float] = field(default_factory=dict)

    @property
    def concavity_fraction(self) -> float:
        return self.concavity_violations / self.concavity_checked if self.concavity_checked else 0.0

    def to_dict(self) -> dict:
        return {
            'busy_prob': self.busy_prob,
            'value': self.value,
            'rates': self.rates.tolist(),
            'powers': self.powers.tolist(),
            'interval': list(self.interval),
            'search': self.search,
            'evaluations': self.evaluations,
            'concavity': {
                'violations': self.concavity_violations,
                'checked': self.concavity_checked,
                'fraction': self.concavity_fraction,
            },
            'policy': {
                'busy_prob': self.policy.busy_prob,
                'cond_busy': [t.tolist() for t in self.policy.cond_busy],
                'cond_idle': [t.tolist() for t in self.policy.cond_idle],
            },
            **self.details,
        }

    def curve_rows(self) -> List[dict]:
        return [{'busy_prob': q, 'g': v} for q, v in self.curve]


def qb_bounds(params: SystemParams, sensing: SensingModel) -> Tuple[float, float]:
    """
    Interval of busy probabilities compatible with serving the PU at λ_p.
    The interval is empty when lo > hi.

    Raises:
        SensingError: P_D = 0 while λ_p > 0
    """
    lam = params.pu_arrival_rate
    p_d = sensing.p_detect
    solo = params.solo_success
    if p_d == 0.0:
        if lam > 0.0:
            raise SensingError("P_D = 0: a busy slot is never sensed busy, so no busy probability "
                               "serves λ_p > 0 through cooperation", {'pu_arrival_rate': lam})
        return 0.0, 0.0
    if lam == 0.0:
        return 0.0, 0.0
    best = p_d * params.max_coop_success + (1.0 - p_d) * solo
    lo = lam / best if best > 0 else math.inf
    hi = min(lam / (p_d * solo), 1.0) if solo > 0 else 1.0
    return lo, hi


def su_rates_sensed(cond: ConditionalPolicy, params: SystemParams, sensing: SensingModel) -> np.ndarray:
    """q_e·(1−P_F)·Σ_i r_s(i)·q(s,i|e)."""
    params.check_tables(cond.cond_idle, 'cond_idle')
    return cond.idle_prob * (1.0 - sensing.p_false_alarm) * np.array(
        [float(np.dot(t, r)) for t, r in zip(cond.cond_idle, params.su_success)])


def pu_service_rate_sensed(cond: ConditionalPolicy, params: SystemParams, sensing: SensingModel) -> float:
    """PU success probability per busy slot: detected and helped, or missed with every SU silent."""
    params.check_tables(cond.cond_busy, 'cond_busy')
    helped = sum(float(np.dot(t, r)) for t, r in zip(cond.cond_busy, params.coop_success))
    silent = sum(float(t[0]) for t in cond.cond_idle)
    return sensing.p_detect * helped + (1.0 - sensing.p_detect) * params.solo_success * silent


def avg_power_sensed(cond: ConditionalPolicy, params: SystemParams, sensing: SensingModel) -> np.ndarray:
    """Average power over the four (true state, sensed state) events."""
    params.check_tables(cond.cond_busy, 'cond_busy')
    sensed_busy = cond.busy_prob * sensing.p_detect + cond.idle_prob * sensing.p_false_alarm
    busy = np.array([float(np.dot(t, p)) for t, p in zip(cond.cond_busy, params.power_levels)])
    idle = np.array([float(np.dot(t, p)) for t, p in zip(cond.cond_idle, params.power_levels)])
    return sensed_busy * busy + (1.0 - sensed_busy) * idle


def g_of_qb(params: SystemParams, sensing: SensingModel, busy_prob: float,
            objective: Objective, method: str = 'auto') -> GValue:
    """Best objective over conditional tables with q_b fixed; infeasible points return nan."""
    if not (0.0 <= busy_prob <= 1.0):
        raise ConfigError(f"busy probability {busy_prob} outside [0,1]")
    _check_objective(objective, params.num_sus)
    polytope = sensed_polytope(params, sensing.p_detect, sensing.p_false_alarm, busy_prob)
    try:
        optimum = maximize_over(polytope, objective, method=method)
    except InfeasibleError:
        return GValue(busy_prob=busy_prob, value=float('nan'), feasible=False)
    n = params.block_size
    x = np.maximum(optimum.x[:2 * n], 0.0)
    policy = ConditionalPolicy(busy_prob=busy_prob, cond_busy=params.split(x[n:]),
                               cond_idle=params.split(x[:n]))
    rates = polytope.rates(x)
    return GValue(busy_prob=busy_prob, value=objective.value(rates), feasible=True,
                  policy=policy, rates=rates)


def _g_point(params, sensing, objective, method, busy_prob):
    return g_of_qb(params, sensing, busy_prob, objective, method)


def _golden_max(evaluate: Callable[[float], float], a: float, b: float, tol: float):
    """Golden-section search for the maximum of a unimodal function on [a, b]."""
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = evaluate(c), evaluate(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = evaluate(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = evaluate(d)


def concavity_violations(curve: List[Tuple[float, float]], tol: float = CONCAVITY_TOL) -> Tuple[int, int]:
    """
    Count consecutive feasible triples where the middle point lies below the
    chord of its neighbours by more than ``tol``. Returns (violations, checked).
    """
    points = sorted((q, v) for q, v in curve if math.isfinite(v))
    violations = 0
    checked = 0
    for (x1, g1), (x2, g2), (x3, g3) in zip(points, points[1:], points[2:]):
        if x3 - x1 <= 0.0:
            continue
        chord = g1 + (x2 - x1) / (x3 - x1) * (g3 - g1)
        checked += 1
        if g2 < chord - tol:
            violations += 1
    return violations, checked


def solve_opt1(params: SystemParams, sensing: SensingModel, objective: Objective,
               search: str = SEARCH_GRID, grid_points: int = DEFAULT_GRID_POINTS,
               qb_tol: float = DEFAULT_QB_TOL, refine: bool = True,
               scheduler: Optional[Scheduler] = None) -> SensingSolveReport:
    """
    Maximize the objective over busy probability and conditional tables.

    Grid search evaluates g on ``grid_points`` equispaced points of the
    feasible interval and then, with ``refine``, runs golden-section search on
    the two cells around the best grid point. Ternary search assumes g is
    unimodal and narrows the whole interval to width ``qb_tol``.

    Raises:
        InfeasibleError: the busy-probability interval is empty or no point in it is feasible
    """
    if search not in (SEARCH_GRID, SEARCH_TERNARY):
        raise ConfigError(f"unknown search mode {search!r}")
    if grid_points < 1:
        raise ConfigError("grid_points must be at least 1")
    lo, hi = qb_bounds(params, sensing)
    if lo > hi:
        raise InfeasibleError(f"empty busy-probability interval [{lo:.6g}, {hi:.6g}]",
                              {'lo': lo, 'hi': hi})

    evaluated: Dict[float, GValue] = {}

    def evaluate(q: float) -> float:
        if q not in evaluated:
            evaluated[q] = g_of_qb(params, sensing, q, objective)
        point = evaluated[q]
        return point.value if point.feasible else -math.inf

    if search == SEARCH_GRID:
        grid = np.linspace(lo, hi, grid_points) if hi > lo else np.array([lo])
        if scheduler is not None:
            values = scheduler.map(partial(_g_point, params, sensing, objective, 'auto'), list(grid))
            evaluated.update({float(q): g for q, g in zip(grid, values)})
        else:
            for q in grid:
                evaluate(float(q))
        feasible = [k for k, q in enumerate(grid) if evaluated[float(q)].feasible]
        if feasible and refine and len(grid) > 2:
            k = max(feasible, key=lambda j: evaluated[float(grid[j])].value)
            left = float(grid[max(k - 1, 0)])
            right = float(grid[min(k + 1, len(grid) - 1)])
            _golden_max(evaluate, left, right, REFINE_TOL)
    else:
        if hi > lo:
            _golden_max(evaluate, lo, hi, qb_tol)
        evaluate(lo)
        evaluate(hi)

    curve = sorted((q, g.value) for q, g in evaluated.items())
    feasible_points = [g for g in evaluated.values() if g.feasible]
    if not feasible_points:
        raise InfeasibleError(f"g(q_b) is infeasible everywhere on [{lo:.6g}, {hi:.6g}]")
    best = max(feasible_points, key=lambda g: (g.value, -g.busy_prob))

    violations, checked = concavity_violations(curve)
    if violations:
        logger.warning(f"g(q_b) violates midpoint concavity at {violations} of {checked} sampled triples")
    logger.info(f"imperfect sensing (P_D={sensing.p_detect}, P_F={sensing.p_false_alarm}): "
                f"q_b*={best.busy_prob:.6g}, g={best.value:.9g} after {len(evaluated)} evaluations")

    return SensingSolveReport(
        busy_prob=best.busy_prob, value=best.value, policy=best.policy, rates=best.rates,
        powers=avg_power_sensed(best.policy, params, sensing), interval=(lo, hi), curve=curve,
        search=search, concavity_violations=violations, concavity_checked=checked,
        evaluations=len(evaluated),
        details={'pu_service_rate': pu_service_rate_sensed(best.policy, params, sensing),
                 'pu_row_residual': abs(best.busy_prob * pu_service_rate_sensed(best.policy, params, sensing)
                                        - params.pu_arrival_rate)})
