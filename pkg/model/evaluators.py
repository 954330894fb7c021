"""Analytic rate and power evaluators. Every evaluator is linear in the policy."""

from typing import Tuple

import numpy as np

from model.params import SystemParams
from model.policy import ConditionalPolicy, JointPolicy


def _dot_rows(tables: Tuple[np.ndarray, ...], weights: Tuple[np.ndarray, ...]) -> np.ndarray:
    return np.array([float(np.dot(t, w)) for t, w in zip(tables, weights)])


def su_rates(joint: JointPolicy, params: SystemParams) -> np.ndarray:
    """r̄_s = Σ_i r_s(i)·q_e[s][i] for every SU."""
    params.check_tables(joint.q_e, 'q_e')
    return _dot_rows(joint.q_e, params.su_success)


def su_rates_conditional(cond: ConditionalPolicy, params: SystemParams) -> np.ndarray:
    """Conditional form of :func:`su_rates`: q_e·Σ_i r_s(i)·q(s,i|e)."""
    params.check_tables(cond.cond_idle, 'cond_idle')
    return cond.idle_prob * _dot_rows(cond.cond_idle, params.su_success)


def pu_service_rate(cond: ConditionalPolicy, params: SystemParams) -> float:
    """Service probability of a PU packet in a busy slot: Σ r_p(s,i)·q(s,i|b)."""
    params.check_tables(cond.cond_busy, 'cond_busy')
    return float(np.sum(_dot_rows(cond.cond_busy, params.coop_success)))


def pu_rate_joint(joint: JointPolicy, params: SystemParams) -> float:
    """Σ r_p(s,i)·q_b[s][i]; equals λ_p for any policy that keeps the PU queue balanced."""
    params.check_tables(joint.q_b, 'q_b')
    return float(np.sum(_dot_rows(joint.q_b, params.coop_success)))


def avg_power(joint: JointPolicy, params: SystemParams) -> np.ndarray:
    """P̄_s = Σ_i P_s(i)·(q_e[s][i] + q_b[s][i])."""
    params.check_tables(joint.q_e, 'q_e')
    return _dot_rows(joint.q_e, params.power_levels) + _dot_rows(joint.q_b, params.power_levels)


def with_little_busy_prob(cond: ConditionalPolicy, params: SystemParams) -> ConditionalPolicy:
    """Set q_b = λ_p / r̄_p, the stationary probability that the PU queue is non-empty."""
    service = pu_service_rate(cond, params)
    if service <= 0.0:
        busy = 0.0 if params.pu_arrival_rate == 0.0 else 1.0
    else:
        busy = params.pu_arrival_rate / service
    return cond.with_busy_prob(busy)
