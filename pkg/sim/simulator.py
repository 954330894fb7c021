"""
Slot-by-slot Monte Carlo simulation of the PU queue and the SU queues under a
conditional cooperation policy.

Randomness is drawn in chunks from a numpy Generator seeded by the config, so
a run is reproducible from (params, policy, config). The queue recursion
itself is a plain Python loop over the pre-drawn chunk.
"""

import logging
from dataclasses import dataclass, field, replace
from functools import partial
from typing import Dict, List, Optional, Sequence

import numpy as np

from engine.scheduler import Scheduler
from model.params import SystemParams
from model.policy import ConditionalPolicy, JointPolicy, to_conditional
from solvers.objectives import Objective
from solvers.optimizer import maximize_over
from solvers.polytope import joint_polytope
from solvers.sensing import SensingModel
from utils.errors import ConfigError, InfeasibleError

logger = logging.getLogger(__name__)

CHUNK_SLOTS = 65_536
DEFAULT_WARMUP = 0.05

LAW_BERNOULLI = 'bernoulli'
LAW_POISSON = 'poisson'

EVENTS = ('busy_sensed_busy', 'busy_sensed_idle', 'idle_sensed_busy', 'idle_sensed_idle')


@dataclass(frozen=True)
class ArrivalLaw:
    """I.i.d. per-slot packet arrivals with the given mean."""
    rate: float
    kind: str = LAW_BERNOULLI

    def __post_init__(self):
        if self.kind not in (LAW_BERNOULLI, LAW_POISSON):
            raise ConfigError(f"unknown arrival law {self.kind!r}")
        if not self.rate >= 0:
            raise ConfigError(f"arrival rate must be nonnegative, got {self.rate}")
        if self.kind == LAW_BERNOULLI and self.rate > 1:
            raise ConfigError(f"bernoulli arrivals need a rate <= 1, got {self.rate}")

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == LAW_BERNOULLI:
            return (rng.random(size) < self.rate).astype(np.int64)
        return rng.poisson(self.rate, size)


@dataclass(frozen=True)
class SimConfig:
    horizon: int
    seed: int = 0
    pu_law: str = LAW_BERNOULLI
    su_arrivals: Optional[Sequence[ArrivalLaw]] = None
    sensing: Optional[SensingModel] = None
    admission: Optional[Sequence[float]] = None
    warmup: float = DEFAULT_WARMUP

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError(f"horizon must be at least 1 slot, got {self.horizon}")
        if not 0.0 <= self.warmup < 1.0:
            raise ConfigError(f"warmup fraction {self.warmup} outside [0,1)")
        if self.pu_law not in (LAW_BERNOULLI, LAW_POISSON):
            raise ConfigError(f"unknown PU arrival law {self.pu_law!r}")
        if self.admission is not None:
            if self.su_arrivals is None:
                raise ConfigError("admission probabilities need exogenous SU arrivals")
            if any(not 0.0 <= p <= 1.0 for p in self.admission):
                raise ConfigError(f"admission probabilities must lie in [0,1], got {list(self.admission)}")

    @property
    def warmup_slots(self) -> int:
        return int(self.warmup * self.horizon)

    def to_dict(self) -> dict:
        return {
            'horizon': self.horizon,
            'seed': self.seed,
            'pu_law': self.pu_law,
            'su_arrivals': None if self.su_arrivals is None else
            [{'rate': a.rate, 'kind': a.kind} for a in self.su_arrivals],
            'sensing': None if self.sensing is None else
            {'p_detect': self.sensing.p_detect, 'p_false_alarm': self.sensing.p_false_alarm},
            'admission': None if self.admission is None else list(self.admission),
            'warmup': self.warmup,
        }


@dataclass
class SimReport:
    """Empirical statistics over the counted (post-warmup) slots plus whole-run conservation counters."""
    slots: int
    throughputs: np.ndarray
    pu_service_rate: float
    pu_throughput: float
    busy_fraction: float
    mean_backlog: float
    final_backlog: int
    powers: np.ndarray
    conservative_powers: np.ndarray
    drops: np.ndarray
    collisions: int
    events: Dict[str, int]
    pu_arrived: int
    pu_departed: int
    su_backlogs: Optional[np.ndarray] = None
    seed: int = 0
    warnings: List[str] = field(default_factory=list)

    @property
    def backlog_growth(self) -> float:
        """Q_p(T)/T."""
        return self.final_backlog / self.slots

    def to_dict(self) -> dict:
        return {
            'slots': self.slots,
            'seed': self.seed,
            'throughputs': self.throughputs.tolist(),
            'sum_throughput': float(np.sum(self.throughputs)),
            'pu_service_rate': self.pu_service_rate,
            'pu_throughput': self.pu_throughput,
            'busy_fraction': self.busy_fraction,
            'mean_backlog': self.mean_backlog,
            'final_backlog': self.final_backlog,
            'backlog_growth': self.backlog_growth,
            'powers': self.powers.tolist(),
            'conservative_powers': self.conservative_powers.tolist(),
            'drops': self.drops.tolist(),
            'collisions': self.collisions,
            'events': dict(self.events),
            'pu_arrived': self.pu_arrived,
            'pu_departed': self.pu_departed,
            'warnings': list(self.warnings),
        }

    def to_row(self) -> dict:
        row = {'seed': self.seed, 'busy_fraction': self.busy_fraction,
               'pu_throughput': self.pu_throughput, 'mean_backlog': self.mean_backlog,
               'backlog_growth': self.backlog_growth, 'collisions': self.collisions}
        row.update({f"throughput{s + 1}": float(t) for s, t in enumerate(self.throughputs)})
        row.update({f"power{s + 1}": float(p) for s, p in enumerate(self.powers)})
        return row


class _ActionTable:
    """Flat (SU, level) action list with a CDF for inverse-transform sampling."""

    def __init__(self, params: SystemParams, tables, label: str, warnings: List[str]):
        flat = np.maximum(params.flat(tables), 0.0)
        total = float(np.sum(flat))
        if total <= 0.0:
            message = f"{label} table is all zeros; substituting point mass on (SU 1, level 0)"
            logger.warning(message)
            warnings.append(message)
            flat = np.zeros_like(flat)
            flat[0] = 1.0
            total = 1.0
        self.cdf = np.cumsum(flat / total)
        self.cdf[-1] = 1.0
        offsets = params.block_offsets
        self.su = [s for s in range(params.num_sus) for _ in range(offsets[s], offsets[s + 1])]
        self.level = [i for s in range(params.num_sus) for i in range(params.num_levels(s))]
        self.power = params.flat(params.power_levels).tolist()
        self.coop = params.flat(params.coop_success).tolist()
        self.success = params.flat(params.su_success).tolist()

    def sample(self, u: np.ndarray) -> List[int]:
        return np.minimum(np.searchsorted(self.cdf, u, side='right'), len(self.cdf) - 1).tolist()


def simulate(params: SystemParams, policy: ConditionalPolicy, config: SimConfig) -> SimReport:
    """
    Run the slotted system for ``config.horizon`` slots.

    A slot is busy when the PU queue is non-empty after the slot's arrivals.
    Sensed busy: the drawn SU cooperates at its drawn level (power wasted on a
    truly idle channel). Sensed idle on a busy channel: a positive level from
    an SU with a packet collides with the PU; level 0 leaves the PU alone.
    Sensed idle on an idle channel: the SU sends its head-of-line packet.
    """
    lam = params.pu_arrival_rate
    pu_law = ArrivalLaw(lam, config.pu_law)
    num_sus = params.num_sus
    policy.check()
    if config.su_arrivals is not None and len(config.su_arrivals) != num_sus:
        raise ConfigError(f"{len(config.su_arrivals)} SU arrival laws for {num_sus} SUs")
    admission = None if config.admission is None else np.asarray(config.admission, dtype=float)
    if admission is not None and admission.shape != (num_sus,):
        raise ConfigError(f"{admission.shape[0]} admission probabilities for {num_sus} SUs")
    sensing = config.sensing or SensingModel()

    warnings: List[str] = []
    busy_actions = _ActionTable(params, policy.cond_busy, 'busy', warnings)
    idle_actions = _ActionTable(params, policy.cond_idle, 'idle', warnings)
    backlogged = config.su_arrivals is None
    solo = params.solo_success

    rng = np.random.default_rng(config.seed)
    warmup = config.warmup_slots
    q_pu = 0
    q_su = [0] * num_sus
    pu_arrived = pu_departed = 0
    counted = busy_slots = pu_served = pu_successes = collisions = 0
    backlog_sum = 0
    delivered = [0] * num_sus
    power_actual = [0.0] * num_sus
    power_conservative = [0.0] * num_sus
    drops = [0] * num_sus
    events = dict.fromkeys(EVENTS, 0)

    t = 0
    while t < config.horizon:
        m = min(CHUNK_SLOTS, config.horizon - t)
        pu_arrivals = pu_law.draw(rng, m).tolist()
        sense_u = rng.random(m).tolist()
        action_u = rng.random(m)
        busy_idx = busy_actions.sample(action_u)
        idle_idx = idle_actions.sample(action_u)
        success_u = rng.random(m).tolist()
        if not backlogged:
            offered = np.column_stack([law.draw(rng, m) for law in config.su_arrivals])
            admitted = offered if admission is None else rng.binomial(offered, admission)
            su_admitted = admitted.tolist()
            su_dropped = (offered - admitted).tolist()

        for k in range(m):
            counting = t + k >= warmup
            a = pu_arrivals[k]
            q_pu += a
            pu_arrived += a
            if not backlogged:
                for s in range(num_sus):
                    q_su[s] += su_admitted[k][s]
                    if counting:
                        drops[s] += su_dropped[k][s]

            busy = q_pu > 0
            sensed_busy = sense_u[k] < (sensing.p_detect if busy else sensing.p_false_alarm)
            departed = 0
            if sensed_busy:
                j = busy_idx[k]
                s = busy_actions.su[j]
                spent = busy_actions.power[j]
                actual = spent
                if busy and success_u[k] < busy_actions.coop[j]:
                    departed = 1
            else:
                j = idle_idx[k]
                s = idle_actions.su[j]
                level = idle_actions.level[j]
                spent = idle_actions.power[j]
                has_packet = backlogged or q_su[s] > 0
                actual = spent if has_packet else 0.0
                if busy:
                    if level > 0 and has_packet:
                        if counting:
                            collisions += 1
                    elif success_u[k] < solo:
                        departed = 1
                elif has_packet and success_u[k] < idle_actions.success[j]:
                    if not backlogged:
                        q_su[s] -= 1
                    if counting:
                        delivered[s] += 1

            q_pu -= departed
            pu_departed += departed
            if counting:
                counted += 1
                power_actual[s] += actual
                power_conservative[s] += spent
                events[('busy_' if busy else 'idle_') + ('sensed_busy' if sensed_busy else 'sensed_idle')] += 1
                if busy:
                    busy_slots += 1
                    pu_served += 1
                    pu_successes += departed
                backlog_sum += q_pu
        t += m

    counted = max(counted, 1)
    report = SimReport(
        slots=config.horizon,
        throughputs=np.array(delivered, dtype=float) / counted,
        pu_service_rate=pu_successes / pu_served if pu_served else 0.0,
        pu_throughput=pu_successes / counted,
        busy_fraction=busy_slots / counted,
        mean_backlog=backlog_sum / counted,
        final_backlog=q_pu,
        powers=np.array(power_actual) / counted,
        conservative_powers=np.array(power_conservative) / counted,
        drops=np.array(drops, dtype=np.int64),
        collisions=collisions,
        events=events,
        pu_arrived=pu_arrived,
        pu_departed=pu_departed,
        su_backlogs=None if backlogged else np.array(q_su, dtype=np.int64),
        seed=config.seed,
        warnings=warnings,
    )
    logger.debug(f"simulated {config.horizon} slots (seed {config.seed}): "
                 f"q̂_b={report.busy_fraction:.4f}, Q_p(T)={q_pu}")
    return report


def replica_seeds(seed: int, count: int) -> List[int]:
    """Independent 64-bit seeds spawned from one root seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(child.generate_state(1, np.uint64)[0]) for child in children]


def _simulate_seed(params, policy, config, seed):
    return simulate(params, policy, replace(config, seed=seed))


def replicate(params: SystemParams, policy: ConditionalPolicy, config: SimConfig, count: int,
              scheduler: Optional[Scheduler] = None) -> List[SimReport]:
    """Independent replications that differ only in their spawned seeds."""
    if count < 1:
        raise ConfigError("need at least one replication")
    run = partial(_simulate_seed, params, policy, config)
    return (scheduler or Scheduler()).map(run, replica_seeds(config.seed, count))


def silent_policy(params: SystemParams) -> ConditionalPolicy:
    """Nobody transmits: point mass on (SU 1, level 0) in both states."""
    point = tuple(np.eye(1, n, 0).ravel() if s == 0 else np.zeros(n)
                  for s, n in enumerate(params.level_counts))
    return ConditionalPolicy(busy_prob=1.0, cond_busy=point, cond_idle=point)


def no_cooperation_policy(params: SystemParams, objective: Objective) -> ConditionalPolicy:
    """
    Best policy whose busy-slot actions are all level 0 (the PU is served at
    r_p(0) only). When λ_p >= r_p(0) no such policy keeps the PU stable and the
    silent policy is returned.
    """
    if params.pu_arrival_rate >= params.solo_success:
        return silent_policy(params)
    masks = [[i == 0 for i in range(n)] for n in params.level_counts]
    try:
        optimum = maximize_over(joint_polytope(params, busy_levels=masks), objective)
    except InfeasibleError:
        logger.warning("level-0-only busy policy infeasible; falling back to the silent policy")
        return silent_policy(params)
    joint = JointPolicy.from_vector(params, optimum.x).clipped()
    return to_conditional(joint)
