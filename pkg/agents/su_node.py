# agents/su_node.py

"""
One secondary user in the distributed solver.

A node holds only its own tables (power levels, its success probabilities and
its cooperation success probabilities for the PU) plus the PU arrival rate and
network size, which are public. Everything it knows about other SUs arrives
through broadcast aggregates: g₂(x_m) = Σ_i x_m(i), g₂(z_m) = Σ_i z_m(i) and
g₁(z_m) = Σ_i r_p(m,i)·z_m(i).
"""

import itertools
import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional

import numpy as np

from solvers.objectives import LogUtility, Objective, WeightedSum
from utils.errors import ConfigError, NumericError

logger = logging.getLogger(__name__)

KKT_TOL = 1e-10
PG_TOL = 1e-10
PG_MAX_ITER = 20_000
ARMIJO = 1e-4

MSG_G2X = 'g2x'
MSG_G1Z_G2Z = 'g1z_g2z'
MSG_CONVERGED = 'converged'


@dataclass
class NodeState:
    """Primal blocks, power slack and power-row dual of one SU."""
    x: np.ndarray
    z: np.ndarray
    y: float
    mu: float

    def copy(self) -> 'NodeState':
        return NodeState(x=self.x.copy(), z=self.z.copy(), y=self.y, mu=self.mu)

    def to_dict(self) -> dict:
        return {'x': self.x.tolist(), 'z': self.z.tolist(), 'y': self.y, 'mu': self.mu}


@dataclass
class SharedDuals:
    """Duals of the coupling rows; every node keeps an identical copy."""
    nu: float
    xi: float
    rho: float

    def __post_init__(self):
        if not self.rho > 0:
            raise ConfigError(f"penalty parameter must be positive, got {self.rho}")


@dataclass(frozen=True)
class LocalParams:
    power_levels: np.ndarray
    su_success: np.ndarray
    coop_success: np.ndarray
    power_budget: float

    @property
    def num_levels(self) -> int:
        return len(self.power_levels)


@dataclass(frozen=True)
class LocalUtility:
    """f_s(r) = weight·r (linear) or weight·log(offset + r)."""
    kind: str
    weight: float = 1.0
    offset: float = 0.0

    @property
    def is_linear(self) -> bool:
        return self.kind == 'linear'

    def value(self, rate: float) -> float:
        if self.is_linear:
            return self.weight * rate
        return self.weight * float(np.log(self.offset + rate))

    def derivative(self, rate: float) -> float:
        if self.is_linear:
            return self.weight
        return self.weight / (self.offset + rate)


@dataclass
class ForeignAggregates:
    """Sums over the other SUs as currently cached by a node."""
    g2x: float = 0.0
    g2z: float = 0.0
    g1z: float = 0.0


def local_utilities(objective: Objective, num_sus: int) -> List[LocalUtility]:
    """Split a separable objective into per-node components."""
    objective.validate(num_sus)
    if isinstance(objective, WeightedSum):
        return [LocalUtility('linear', float(w)) for w in objective.weight_vector(num_sus)]
    if isinstance(objective, LogUtility):
        weights = np.ones(num_sus) if objective.weights is None else np.asarray(objective.weights)
        return [LocalUtility('log', float(w), objective.offset) for w in weights]
    raise ConfigError(f"the distributed solver supports weighted-sum and log-utility objectives, "
                      f"not {objective.kind}")


def solve_orthant_qp(c: np.ndarray, rows: np.ndarray, targets: np.ndarray, rho: float) -> np.ndarray:
    """
    Exact minimizer of c·v + (ρ/2)·||rows·v − targets||² over v >= 0.

    Some minimizer has a support S on which the columns of ``rows`` are
    independent, so supports are enumerated by size and then lexicographically,
    and the first one satisfying the KKT conditions is returned. If rounding
    rejects every support, the candidate with the smallest KKT violation wins.
    """
    d = len(c)
    rank = np.linalg.matrix_rank(rows)
    best, best_violation = np.zeros(d), np.inf
    for size in range(0, min(rank, d) + 1):
        for support in itertools.combinations(range(d), size):
            v = np.zeros(d)
            if size:
                cols = rows[:, support]
                gram = cols.T @ cols
                if np.linalg.matrix_rank(gram) < size:
                    continue
                v[list(support)] = np.linalg.solve(gram, cols.T @ targets - c[list(support)] / rho)
            grad = c + rho * rows.T @ (rows @ v - targets)
            scale = 1.0 + float(np.max(np.abs(c))) + rho * float(np.max(np.abs(targets), initial=0.0))
            violation = max(-float(np.min(v)), -float(np.min(grad)),
                            float(np.max(np.abs(grad[v > 0]), initial=0.0))) / scale
            if violation <= KKT_TOL:
                return np.maximum(v, 0.0)
            if violation < best_violation:
                best, best_violation = np.maximum(v, 0.0), violation
    logger.debug(f"orthant QP fell back to the least-violating support ({best_violation:.3g})")
    return best


def _spectral_projected_gradient(objective, gradient, start: np.ndarray) -> np.ndarray:
    x = np.maximum(start, 0.0)
    g = gradient(x)
    step_len = 1.0
    for _ in range(PG_MAX_ITER):
        if np.max(np.abs(np.maximum(x - g, 0.0) - x)) <= PG_TOL:
            return x
        direction = np.maximum(x - step_len * g, 0.0) - x
        f0 = objective(x)
        slope = float(g @ direction)
        t = 1.0
        while objective(x + t * direction) > f0 + ARMIJO * t * slope and t > 1e-20:
            t *= 0.5
        x_new = np.maximum(x + t * direction, 0.0)
        g_new = gradient(x_new)
        s, dg = x_new - x, g_new - g
        sy = float(s @ dg)
        step_len = float(np.clip(s @ s / sy, 1e-12, 1e12)) if sy > 0 else 1e12
        x, g = x_new, g_new
    logger.debug("projected gradient hit its iteration cap")
    return x


def _prox(c: np.ndarray, rows: np.ndarray, targets: np.ndarray, rho: float,
          utility: Optional[LocalUtility] = None, rates: Optional[np.ndarray] = None,
          start: Optional[np.ndarray] = None) -> np.ndarray:
    """argmin over v >= 0 of −f_s(rates·v) + c·v + (ρ/2)||rows·v − targets||²."""
    if utility is None or utility.is_linear:
        linear = c if utility is None else c - utility.weight * rates
        return solve_orthant_qp(linear, rows, targets, rho)

    def objective(v):
        residual = rows @ v - targets
        return -utility.value(float(rates @ v)) + float(c @ v) + 0.5 * rho * float(residual @ residual)

    def gradient(v):
        return -utility.derivative(float(rates @ v)) * rates + c + rho * rows.T @ (rows @ v - targets)

    v = _spectral_projected_gradient(objective, gradient, start if start is not None else np.zeros(len(c)))
    if not np.all(np.isfinite(v)):
        raise NumericError("non-finite iterate in the node prox step")
    return v


def prox_x(state: NodeState, shared: SharedDuals, local: LocalParams, utility: LocalUtility,
           foreign: ForeignAggregates) -> np.ndarray:
    """Idle-block update: the node's augmented-Lagrangian block in x_s."""
    ones = np.ones(local.num_levels)
    c = state.mu * local.power_levels + shared.xi * ones
    rows = np.vstack([local.power_levels, ones])
    targets = np.array([
        local.power_budget - float(local.power_levels @ state.z) - state.y,
        1.0 - foreign.g2x - foreign.g2z - float(np.sum(state.z)),
    ])
    return _prox(c, rows, targets, shared.rho, utility, local.su_success, state.x)


def prox_z(state: NodeState, shared: SharedDuals, local: LocalParams, foreign: ForeignAggregates,
           pu_arrival_rate: float) -> np.ndarray:
    """Busy-block update, with the PU-rate row penalized alongside power and mass."""
    ones = np.ones(local.num_levels)
    c = state.mu * local.power_levels + shared.xi * ones + shared.nu * local.coop_success
    rows = np.vstack([local.power_levels, local.coop_success, ones])
    targets = np.array([
        local.power_budget - float(local.power_levels @ state.x) - state.y,
        pu_arrival_rate - foreign.g1z,
        1.0 - foreign.g2x - float(np.sum(state.x)) - foreign.g2z,
    ])
    return _prox(c, rows, targets, shared.rho)


def prox_y(state: NodeState, shared: SharedDuals, local: LocalParams) -> float:
    """y_s = max(0, P̂_s − powerload − μ_s/ρ)."""
    load = float(local.power_levels @ (state.x + state.z))
    return max(0.0, local.power_budget - load - state.mu / shared.rho)


class SecondaryUserNode:
    """
    ADMM participant for one SU. Updates read the node's own state, its own
    parameters and the aggregates cached from the broadcast bus.
    """

    def __init__(self, index: int, local: LocalParams, utility: LocalUtility,
                 pu_arrival_rate: float, state: NodeState, shared: SharedDuals, bus=None):
        self.index = index
        self.name = f"su{index + 1}"
        self.local = local
        self.utility = utility
        self.pu_arrival_rate = pu_arrival_rate
        self.state = state
        self.shared = replace(shared)
        self.bus = bus
        self.peer_g2x: Dict[str, float] = {}
        self.peer_g2z: Dict[str, float] = {}
        self.peer_g1z: Dict[str, float] = {}
        self.converged = False
        self.local_metric = float('inf')
        self._last_value = self.local_value()
        self.logger = logging.getLogger(f"{__name__}.{self.name}")

    # -- bus --------------------------------------------------------------

    def receive_message(self, sender: str, kind: str, payload: Dict[str, float]):
        if kind == MSG_G2X:
            self.peer_g2x[sender] = payload['g2']
        elif kind == MSG_G1Z_G2Z:
            self.peer_g1z[sender] = payload['g1']
            self.peer_g2z[sender] = payload['g2']
        elif kind != MSG_CONVERGED:
            raise ValueError(f"{self.name} got an unknown message kind {kind!r}")

    def _broadcast(self, kind: str, payload: Dict[str, float]):
        if self.bus is not None:
            self.bus.broadcast(self.name, kind, payload)

    def publish(self):
        """Broadcast both aggregates of the current state (initial round)."""
        self._broadcast(MSG_G2X, {'g2': self.g2x})
        self._broadcast(MSG_G1Z_G2Z, {'g1': self.g1z, 'g2': self.g2z})

    def foreign(self) -> ForeignAggregates:
        return ForeignAggregates(g2x=sum(self.peer_g2x.values()), g2z=sum(self.peer_g2z.values()),
                                 g1z=sum(self.peer_g1z.values()))

    # -- aggregates -------------------------------------------------------

    @property
    def g2x(self) -> float:
        return float(np.sum(self.state.x))

    @property
    def g2z(self) -> float:
        return float(np.sum(self.state.z))

    @property
    def g1z(self) -> float:
        return float(self.local.coop_success @ self.state.z)

    @property
    def rate(self) -> float:
        return float(self.local.su_success @ self.state.x)

    @property
    def power_residual(self) -> float:
        load = float(self.local.power_levels @ (self.state.x + self.state.z))
        return load + self.state.y - self.local.power_budget

    def local_value(self) -> float:
        return self.utility.value(self.rate)

    # -- updates ----------------------------------------------------------

    def update_x(self):
        self.state.x = prox_x(self.state, self.shared, self.local, self.utility, self.foreign())
        self._broadcast(MSG_G2X, {'g2': self.g2x})

    def update_z(self):
        self.state.z = prox_z(self.state, self.shared, self.local, self.foreign(), self.pu_arrival_rate)
        self._broadcast(MSG_G1Z_G2Z, {'g1': self.g1z, 'g2': self.g2z})

    def update_y(self):
        self.state.y = prox_y(self.state, self.shared, self.local)

    def update_duals(self):
        """ξ, ν from the cached totals; μ_s from the node's own power row."""
        foreign = self.foreign()
        mass = foreign.g2x + foreign.g2z + self.g2x + self.g2z - 1.0
        pu = foreign.g1z + self.g1z - self.pu_arrival_rate
        self.shared.xi += self.shared.rho * mass
        self.shared.nu += self.shared.rho * pu
        self.state.mu += self.shared.rho * self.power_residual

    def check_convergence(self, eps: float) -> bool:
        """Compare f_s with its previous value and announce local convergence."""
        value = self.local_value()
        self.local_metric = abs(value - self._last_value)
        self._last_value = value
        self.converged = self.local_metric < eps
        if self.converged:
            self._broadcast(MSG_CONVERGED, {'metric': self.local_metric})
        return self.converged
