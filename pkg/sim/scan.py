"""PU backlog scan over a grid of PU arrival rates."""

import logging
from dataclasses import dataclass
from functools import partial
from typing import Callable, List, Optional, Sequence

import numpy as np

from engine.scheduler import Scheduler
from model.evaluators import pu_service_rate
from model.params import SystemParams
from model.policy import ConditionalPolicy, to_conditional
from sim.simulator import SimConfig, no_cooperation_policy, simulate
from solvers.objectives import Objective
from solvers.optimizer import solve_opt0
from utils.errors import InfeasibleError

logger = logging.getLogger(__name__)

PolicyFactory = Callable[[SystemParams], Optional[ConditionalPolicy]]


@dataclass
class ScanRow:
    pu_arrival_rate: float
    feasible: bool
    mean_backlog: float = float('nan')
    final_backlog: int = 0
    backlog_growth: float = float('nan')
    busy_fraction: float = float('nan')
    little_busy_prob: float = float('nan')
    pu_throughput: float = float('nan')
    sum_throughput: float = float('nan')

    def to_row(self) -> dict:
        return {
            'pu_arrival_rate': self.pu_arrival_rate,
            'feasible': int(self.feasible),
            'mean_backlog': self.mean_backlog,
            'final_backlog': self.final_backlog,
            'backlog_growth': self.backlog_growth,
            'busy_fraction': self.busy_fraction,
            'little_busy_prob': self.little_busy_prob,
            'pu_throughput': self.pu_throughput,
            'sum_throughput': self.sum_throughput,
        }


def _optimal_policy(objective: Objective, params: SystemParams) -> Optional[ConditionalPolicy]:
    try:
        report = solve_opt0(params, objective)
    except InfeasibleError:
        return None
    return to_conditional(report.policy)


def _no_cooperation(objective: Objective, params: SystemParams) -> ConditionalPolicy:
    return no_cooperation_policy(params, objective)


def optimal_policy_factory(objective: Objective) -> PolicyFactory:
    """Factory solving the perfect-sensing problem at each grid point; None past λ̂."""
    return partial(_optimal_policy, objective)


def no_cooperation_factory(objective: Objective) -> PolicyFactory:
    return partial(_no_cooperation, objective)


def _scan_point(params: SystemParams, factory: PolicyFactory, config: SimConfig,
                pu_arrival_rate: float) -> ScanRow:
    point = params.with_arrival_rate(pu_arrival_rate)
    policy = factory(point)
    if policy is None:
        logger.info(f"λ_p={pu_arrival_rate:.4g}: no stabilizing policy")
        return ScanRow(pu_arrival_rate=pu_arrival_rate, feasible=False)
    service = pu_service_rate(policy, point)
    report = simulate(point, policy, config)
    logger.info(f"λ_p={pu_arrival_rate:.4g}: mean backlog {report.mean_backlog:.4g}, "
                f"Q_p(T)/T={report.backlog_growth:.3g}")
    return ScanRow(
        pu_arrival_rate=pu_arrival_rate, feasible=True, mean_backlog=report.mean_backlog,
        final_backlog=report.final_backlog, backlog_growth=report.backlog_growth,
        busy_fraction=report.busy_fraction,
        little_busy_prob=min(pu_arrival_rate / service, 1.0) if service > 0 else float('nan'),
        pu_throughput=report.pu_throughput, sum_throughput=float(np.sum(report.throughputs)))


def stability_scan(params: SystemParams, factory: PolicyFactory, grid: Sequence[float],
                   config: SimConfig, scheduler: Optional[Scheduler] = None) -> List[ScanRow]:
    """Simulate the factory's policy at every PU arrival rate in ``grid``; rows follow grid order."""
    run = partial(_scan_point, params, factory, config)
    return (scheduler or Scheduler()).map(run, [float(v) for v in grid])
