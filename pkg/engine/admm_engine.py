# engine/admm_engine.py

"""
Distributed policy optimization by ADMM over a broadcast bus.

Per iteration: sequential x-updates in SU order (each node sees the
already-updated aggregates of its predecessors), sequential z-updates,
y-updates, then dual updates. A run terminates when every node announces
local convergence in the same iteration and all coupling-row residuals are
within the residual guard.
"""

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from agents.su_node import (LocalParams, NodeState, SecondaryUserNode, SharedDuals,
                            local_utilities)
from engine.communicator import BroadcastBus, BroadcastLog
from model.evaluators import avg_power, pu_rate_joint, su_rates
from model.params import SystemParams
from model.policy import JointPolicy
from solvers.objectives import Objective
from solvers.optimizer import STATUS_NOT_CONVERGED, STATUS_OPTIMAL, SolveReport
from solvers.regions import max_stable_rate
from utils.errors import ConfigError, DimensionError, InfeasibleError

logger = logging.getLogger(__name__)

DEFAULT_RHO = 0.1
DEFAULT_EPS = 1e-5
DEFAULT_MAX_ITER = 100_000
RESIDUAL_CEILING = 1e-6

COLD_IDLE = 0.01
COLD_BUSY = 0.03
COLD_DUAL = 1.0


@dataclass
class AdmmState:
    """Node blocks and duals; the warm-start file format."""
    nodes: List[NodeState]
    nu: float
    xi: float

    def to_dict(self) -> dict:
        return {'nodes': [n.to_dict() for n in self.nodes], 'nu': self.nu, 'xi': self.xi}

    @classmethod
    def from_dict(cls, data: dict) -> 'AdmmState':
        nodes = [NodeState(x=np.asarray(n['x'], dtype=float), z=np.asarray(n['z'], dtype=float),
                           y=float(n.get('y', 0.0)), mu=float(n.get('mu', COLD_DUAL)))
                 for n in data['nodes']]
        return cls(nodes=nodes, nu=float(data.get('nu', COLD_DUAL)), xi=float(data.get('xi', COLD_DUAL)))

    @classmethod
    def from_policy(cls, policy: JointPolicy, params: SystemParams) -> 'AdmmState':
        """Primal warm start from a policy alone; duals start cold and slacks close the power rows."""
        nodes = []
        for s in range(params.num_sus):
            x, z = np.array(policy.q_e[s], dtype=float), np.array(policy.q_b[s], dtype=float)
            load = float(params.power_levels[s] @ (x + z))
            nodes.append(NodeState(x=x, z=z, y=max(0.0, params.power_budget[s] - load), mu=COLD_DUAL))
        return cls(nodes=nodes, nu=COLD_DUAL, xi=COLD_DUAL)

    def check(self, params: SystemParams) -> 'AdmmState':
        if len(self.nodes) != params.num_sus:
            raise DimensionError(f"state holds {len(self.nodes)} nodes for {params.num_sus} SUs")
        for s, node in enumerate(self.nodes):
            expected = params.num_levels(s)
            if node.x.shape != (expected,) or node.z.shape != (expected,):
                raise DimensionError(f"node {s} blocks do not have {expected} levels")
        return self

    def save(self, path: Union[str, Path]):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'AdmmState':
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read warm-start file {path}: {e}")
        if 'nodes' not in data:
            raise ConfigError(f"warm-start file {path} has no 'nodes' entry")
        return cls.from_dict(data)


def load_warm_start(path: Union[str, Path], params: SystemParams) -> AdmmState:
    """
    Warm start from a file of a previous run: an ADMM state file, a solve
    report (its `policy` entry) or a policy CSV. Policies start with cold duals.
    """
    path = Path(path)
    if path.suffix.lower() == '.csv':
        try:
            with path.open(newline='') as handle:
                rows = list(csv.DictReader(handle))
        except OSError as e:
            raise ConfigError(f"cannot read warm-start file {path}: {e}")
        policy = JointPolicy.from_rows(params, rows)
        logger.info(f"warm start from policy table {path}")
        return AdmmState.from_policy(policy, params).check(params)

    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read warm-start file {path}: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"warm-start file {path} is not a JSON object")
    if 'nodes' in data:
        return AdmmState.from_dict(data).check(params)
    policy = data.get('policy', data)
    if not isinstance(policy, dict) or 'q_e' not in policy or 'q_b' not in policy:
        raise ConfigError(f"warm-start file {path} holds neither ADMM state nor a policy")
    joint = JointPolicy(q_e=policy['q_e'], q_b=policy['q_b'])
    logger.info(f"warm start from the policy in {path}")
    return AdmmState.from_policy(joint, params).check(params)


def cold_start(params: SystemParams) -> AdmmState:
    nodes = []
    for s in range(params.num_sus):
        x = np.full(params.num_levels(s), COLD_IDLE)
        z = np.full(params.num_levels(s), COLD_BUSY)
        load = float(params.power_levels[s] @ (x + z))
        nodes.append(NodeState(x=x, z=z, y=max(0.0, params.power_budget[s] - load), mu=COLD_DUAL))
    return AdmmState(nodes=nodes, nu=COLD_DUAL, xi=COLD_DUAL)


@dataclass
class TraceRow:
    iteration: int
    objective: float
    mass_residual: float
    pu_residual: float
    power_residual: float
    converged_nodes: int
    guard_blocked: bool

    def to_row(self) -> dict:
        return {
            'iteration': self.iteration,
            'objective': self.objective,
            'mass_residual': self.mass_residual,
            'pu_residual': self.pu_residual,
            'power_residual': self.power_residual,
            'converged_nodes': self.converged_nodes,
            'guard_blocked': int(self.guard_blocked),
        }


@dataclass
class AdmmResult:
    report: SolveReport
    log: BroadcastLog
    trace: List[TraceRow]
    state: AdmmState
    iterations: int
    wall_time: float = 0.0
    settings: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.report.converged

    def to_dict(self) -> dict:
        data = self.report.to_dict()
        data.update({'admm': {**self.settings, 'iterations': self.iterations,
                              'wall_time': self.wall_time, 'broadcasts': self.log.summary()}})
        return data


def build_nodes(params: SystemParams, objective: Objective, state: AdmmState,
                rho: float, bus: BroadcastBus) -> List[SecondaryUserNode]:
    """One node per SU, each handed only its own slice of the parameters."""
    utilities = local_utilities(objective, params.num_sus)
    nodes = []
    for s in range(params.num_sus):
        local = LocalParams(power_levels=np.array(params.power_levels[s]),
                            su_success=np.array(params.su_success[s]),
                            coop_success=np.array(params.coop_success[s]),
                            power_budget=float(params.power_budget[s]))
        node = SecondaryUserNode(s, local, utilities[s], params.pu_arrival_rate,
                                 state.nodes[s].copy(), SharedDuals(nu=state.nu, xi=state.xi, rho=rho))
        bus.register(node.name, node)
        nodes.append(node)
    return nodes


def _residuals(nodes: List[SecondaryUserNode], pu_arrival_rate: float):
    mass = abs(sum(n.g2x + n.g2z for n in nodes) - 1.0)
    pu = abs(sum(n.g1z for n in nodes) - pu_arrival_rate)
    power = max(abs(n.power_residual) for n in nodes)
    return mass, pu, power


def _collect_state(nodes: List[SecondaryUserNode]) -> AdmmState:
    # duals are identical across nodes; read them from the first
    return AdmmState(nodes=[n.state.copy() for n in nodes], nu=nodes[0].shared.nu, xi=nodes[0].shared.xi)


def admm_solve(params: SystemParams, objective: Objective, rho: float = DEFAULT_RHO,
               eps: float = DEFAULT_EPS, init: Optional[AdmmState] = None,
               max_iter: int = DEFAULT_MAX_ITER) -> AdmmResult:
    """
    Solve the perfect-sensing policy problem with one ADMM node per SU.

    ``init`` is a warm-start state (e.g. the final state of a previous run);
    without it every node starts cold. Hitting ``max_iter`` is reported through
    the status ``not_converged``, never raised.

    Raises:
        ConfigError: ρ or ε not positive, or an unsupported objective
        InfeasibleError: λ_p above the maximum stable rate
    """
    if not rho > 0 or not eps > 0:
        raise ConfigError(f"ADMM needs ρ > 0 and ε > 0, got ρ={rho}, ε={eps}")
    if max_iter < 1:
        raise ConfigError("max_iter must be at least 1")
    limit = max_stable_rate(params).value
    if params.pu_arrival_rate > limit + 1e-12:
        raise InfeasibleError(f"λ_p={params.pu_arrival_rate} exceeds the maximum stable rate {limit:.6g}",
                              {'pu_arrival_rate': params.pu_arrival_rate, 'max_stable_rate': limit})

    started = time.perf_counter()
    state = (init or cold_start(params)).check(params)
    bus = BroadcastBus()
    nodes = build_nodes(params, objective, state, rho, bus)
    guard = min(10.0 * eps, RESIDUAL_CEILING)

    bus.begin_iteration(0)
    for node in nodes:
        node.publish()

    trace: List[TraceRow] = []
    converged = False
    iteration = 0
    for iteration in range(1, max_iter + 1):
        bus.begin_iteration(iteration)
        for node in nodes:
            node.update_x()
        for node in nodes:
            node.update_z()
        for node in nodes:
            node.update_y()
        for node in nodes:
            node.update_duals()
        announced = sum(node.check_convergence(eps) for node in nodes)

        mass, pu, power = _residuals(nodes, params.pu_arrival_rate)
        all_local = announced == len(nodes)
        blocked = all_local and max(mass, pu, power) > guard
        trace.append(TraceRow(iteration=iteration, objective=sum(n.local_value() for n in nodes),
                              mass_residual=mass, pu_residual=pu, power_residual=power,
                              converged_nodes=announced, guard_blocked=blocked))
        logger.debug(f"iteration {iteration}: f={trace[-1].objective:.9g} mass={mass:.3g} "
                     f"pu={pu:.3g} power={power:.3g} converged={announced}/{len(nodes)}")
        if blocked and (not trace[:-1] or not trace[-2].guard_blocked):
            logger.warning(f"iteration {iteration}: all nodes converged locally but residuals "
                           f"{max(mass, pu, power):.3g} exceed the guard {guard:.3g}")
        if all_local and not blocked:
            converged = True
            break

    final = _collect_state(nodes)
    policy = JointPolicy(q_e=tuple(n.x for n in final.nodes), q_b=tuple(n.z for n in final.nodes)).clipped()
    rates = su_rates(policy, params)
    mass, pu, power = _residuals(nodes, params.pu_arrival_rate)
    status = STATUS_OPTIMAL if converged else STATUS_NOT_CONVERGED
    report = SolveReport(
        policy=policy, objective_value=objective.value(rates), rates=rates,
        powers=avg_power(policy, params), status=status, iterations=iteration, method='admm',
        residuals={'mass_residual': abs(policy.total_mass - 1.0),
                   'pu_rate_residual': abs(pu_rate_joint(policy, params) - params.pu_arrival_rate),
                   'min_power_slack': float(np.min(params.power_budget - avg_power(policy, params))),
                   'coupling_residual': max(mass, pu, power)},
        duals={'nu': [final.nu], 'xi': [final.xi], 'mu': [n.mu for n in final.nodes]})
    wall = time.perf_counter() - started
    if converged:
        logger.info(f"ADMM converged in {iteration} iterations ({wall:.2f}s): f={report.objective_value:.9g}")
    else:
        logger.warning(f"ADMM stopped at the iteration cap {max_iter} with coupling residual "
                       f"{max(mass, pu, power):.3g}")
    return AdmmResult(report=report, log=bus.log, trace=trace, state=final, iterations=iteration,
                      wall_time=wall, settings={'rho': rho, 'eps': eps, 'max_iter': max_iter,
                                                'warm_start': init is not None})
