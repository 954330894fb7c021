"""
Constraint sets over which policies are optimized.

A PolicyPolytope couples an LP constraint system with a linear rate map
(rates = rate_map @ x), so the same optimizer serves the perfect-sensing
problem, its flow-controlled variant and the fixed-busy-probability problem
under imperfect sensing.
"""

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from model.params import SystemParams
from solvers.linprog import LpProblem


@dataclass(frozen=True)
class PolicyPolytope:
    a_ub: np.ndarray
    b_ub: np.ndarray
    a_eq: np.ndarray
    b_eq: np.ndarray
    rate_map: np.ndarray
    num_policy_vars: int
    label: str = ''

    @property
    def n(self) -> int:
        return self.rate_map.shape[1]

    def lp(self, c: np.ndarray) -> LpProblem:
        return LpProblem(c=c, a_ub=self.a_ub, b_ub=self.b_ub, a_eq=self.a_eq, b_eq=self.b_eq)

    def rates(self, x: np.ndarray) -> np.ndarray:
        return self.rate_map @ x

    def residuals(self, x: np.ndarray) -> dict:
        eq = self.a_eq @ x - self.b_eq if self.a_eq.size else np.zeros(0)
        ub = self.b_ub - self.a_ub @ x if self.a_ub.size else np.zeros(0)
        return {
            'max_eq_residual': float(np.max(np.abs(eq))) if eq.size else 0.0,
            'min_ub_slack': float(np.min(ub)) if ub.size else float('inf'),
            'min_entry': float(np.min(x)) if x.size else 0.0,
        }

    def with_throughput_caps(self, caps: Sequence[float]) -> 'PolicyPolytope':
        """
        Append one throughput variable R_s per SU with R_s <= caps[s] and
        R_s <= (rate_map @ x)_s; the new rate map reads the R_s.
        """
        caps = np.asarray(caps, dtype=float)
        num_sus, n = self.rate_map.shape
        pad = np.zeros((self.a_ub.shape[0], num_sus))
        cap_rows = np.hstack([np.zeros((num_sus, n)), np.eye(num_sus)])
        link_rows = np.hstack([-self.rate_map, np.eye(num_sus)])
        a_ub = np.vstack([np.hstack([self.a_ub, pad]), cap_rows, link_rows])
        b_ub = np.concatenate([self.b_ub, caps, np.zeros(num_sus)])
        a_eq = np.hstack([self.a_eq, np.zeros((self.a_eq.shape[0], num_sus))])
        rate_map = np.hstack([np.zeros((num_sus, n)), np.eye(num_sus)])
        return replace(self, a_ub=a_ub, b_ub=b_ub, a_eq=a_eq, rate_map=rate_map,
                       label=f"{self.label}+caps")


def block_rows(params: SystemParams, tables, left: int, width: int) -> np.ndarray:
    """One row per SU holding ``tables[s]`` in that SU's slice of a block starting at ``left``."""
    rows = np.zeros((params.num_sus, width))
    offsets = params.block_offsets
    for s in range(params.num_sus):
        rows[s, left + offsets[s]:left + offsets[s + 1]] = tables[s]
    return rows


def joint_polytope(params: SystemParams, pu_rate_sense: str = 'eq',
                   busy_levels: Optional[Sequence[Sequence[bool]]] = None) -> PolicyPolytope:
    """
    Joint policies x = [q_e block, q_b block] with

        Σ r_p(s,i)·q_b(s,i) = λ_p      (or >= λ_p with ``pu_rate_sense='ge'``)
        Σ_i P_s(i)·(q_e(s,i) + q_b(s,i)) <= P̂_s   for every SU
        Σ q = 1,   q >= 0

    ``busy_levels`` optionally masks busy entries that must stay zero.
    """
    n = params.block_size
    width = 2 * n
    coop = np.concatenate([np.zeros(n), params.flat(params.coop_success)])
    power = block_rows(params, params.power_levels, 0, width) + \
        block_rows(params, params.power_levels, n, width)
    mass = np.ones(width)

    a_eq = [mass]
    b_eq = [1.0]
    a_ub = list(power)
    b_ub = list(params.power_budget)
    if pu_rate_sense == 'eq':
        a_eq.append(coop)
        b_eq.append(params.pu_arrival_rate)
    elif pu_rate_sense == 'ge':
        a_ub.append(-coop)
        b_ub.append(-params.pu_arrival_rate)
    else:
        raise ValueError(f"pu_rate_sense must be 'eq' or 'ge', got {pu_rate_sense!r}")

    if busy_levels is not None:
        allowed = np.concatenate([np.asarray(m, dtype=bool) for m in busy_levels])
        for k in np.flatnonzero(~allowed):
            row = np.zeros(width)
            row[n + k] = 1.0
            a_eq.append(row)
            b_eq.append(0.0)

    rate_map = block_rows(params, params.su_success, 0, width)
    return PolicyPolytope(a_ub=np.array(a_ub), b_ub=np.array(b_ub, dtype=float),
                          a_eq=np.array(a_eq), b_eq=np.array(b_eq, dtype=float),
                          rate_map=rate_map, num_policy_vars=width,
                          label='c2' if pu_rate_sense == 'ge' else 'c0')


def sensed_polytope(params: SystemParams, p_detect: float, p_false_alarm: float,
                    busy_prob: float) -> PolicyPolytope:
    """
    Conditional tables x = [q(·|e) block, q(·|b) block] for a pinned busy
    probability q_b under imperfect sensing:

        q_b·P_D·Σ r_p(s,i)·q(s,i|b) + q_b·(1−P_D)·r_p(0)·Σ_s q(s,0|e) = λ_p
        (q_b·P_D + q_e·P_F)·Σ_i P_s(i)·q(s,i|b)
            + (1 − q_b·P_D − q_e·P_F)·Σ_i P_s(i)·q(s,i|e) <= P̂_s
        Σ q(·|b) = 1,  Σ q(·|e) = 1,  q >= 0

    with SU rates q_e·(1−P_F)·Σ_i r_s(i)·q(s,i|e).
    """
    n = params.block_size
    width = 2 * n
    q_b = busy_prob
    q_e = 1.0 - busy_prob
    sensed_busy = q_b * p_detect + q_e * p_false_alarm

    pu_row = np.zeros(width)
    pu_row[n:] = q_b * p_detect * params.flat(params.coop_success)
    offsets = params.block_offsets
    for s in range(params.num_sus):
        pu_row[offsets[s]] += q_b * (1.0 - p_detect) * params.solo_success

    power = sensed_busy * block_rows(params, params.power_levels, n, width) + \
        (1.0 - sensed_busy) * block_rows(params, params.power_levels, 0, width)
    idle_mass = np.concatenate([np.ones(n), np.zeros(n)])
    busy_mass = np.concatenate([np.zeros(n), np.ones(n)])

    rate_map = q_e * (1.0 - p_false_alarm) * block_rows(params, params.su_success, 0, width)
    return PolicyPolytope(a_ub=power, b_ub=np.array(params.power_budget, dtype=float),
                          a_eq=np.vstack([pu_row, idle_mass, busy_mass]),
                          b_eq=np.array([params.pu_arrival_rate, 1.0, 1.0]),
                          rate_map=rate_map, num_policy_vars=width,
                          label=f"sensed(q_b={busy_prob:.6g})")
