"""
Randomized stationary policies in joint and conditional form, plus the
linearizing map between them.

Joint form: q_e[s][i] = P(PU idle, SU s transmits its own packet at level i),
            q_b[s][i] = P(PU busy, SU s cooperates at level i).
Conditional form: busy probability q_b and the tables q(s,i|b), q(s,i|e).
"""

from dataclasses import dataclass
from typing import Dict, Iterable, List, Tuple

import numpy as np

from model.params import SystemParams, _frozen
from utils.errors import DimensionError, InvalidPolicyError

NORMALIZATION_TOL = 1e-9

STATE_IDLE = 'e'
STATE_BUSY = 'b'


def _tables(values) -> Tuple[np.ndarray, ...]:
    return tuple(_frozen(v) for v in values)


def _total(tables: Tuple[np.ndarray, ...]) -> float:
    return float(sum(np.sum(t) for t in tables))


def _shape(tables: Tuple[np.ndarray, ...]) -> Tuple[int, ...]:
    return tuple(len(t) for t in tables)


def _check_nonnegative(tables, label: str, tol: float):
    for s, row in enumerate(tables):
        if not np.all(np.isfinite(row)):
            raise InvalidPolicyError(f"{label}[{s}] has non-finite entries")
        if np.any(row < -tol):
            i = int(np.argmin(row))
            raise InvalidPolicyError(f"{label}[{s}][{i}]={row[i]} is negative")


@dataclass(frozen=True)
class JointPolicy:
    """Joint probabilities over (channel state, SU, level)."""

    q_e: Tuple[np.ndarray, ...]
    q_b: Tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, 'q_e', _tables(self.q_e))
        object.__setattr__(self, 'q_b', _tables(self.q_b))
        if _shape(self.q_e) != _shape(self.q_b):
            raise DimensionError(f"idle block shape {_shape(self.q_e)} differs from "
                                 f"busy block shape {_shape(self.q_b)}")

    @property
    def num_sus(self) -> int:
        return len(self.q_e)

    @property
    def level_counts(self) -> List[int]:
        return [len(t) for t in self.q_e]

    @property
    def idle_mass(self) -> float:
        return _total(self.q_e)

    @property
    def busy_mass(self) -> float:
        return _total(self.q_b)

    @property
    def total_mass(self) -> float:
        return self.idle_mass + self.busy_mass

    def check(self, tol: float = NORMALIZATION_TOL) -> 'JointPolicy':
        """Raise InvalidPolicyError unless entries are nonnegative and sum to 1."""
        _check_nonnegative(self.q_e, 'q_e', tol)
        _check_nonnegative(self.q_b, 'q_b', tol)
        if abs(self.total_mass - 1.0) > tol:
            raise InvalidPolicyError(f"joint policy mass {self.total_mass!r} differs from 1")
        return self

    def flatten(self) -> np.ndarray:
        """Vector [idle block..., busy block...] in SU-major, level-minor order."""
        return np.concatenate([np.concatenate(self.q_e), np.concatenate(self.q_b)])

    @classmethod
    def from_vector(cls, params: SystemParams, vector: np.ndarray) -> 'JointPolicy':
        vector = np.asarray(vector, dtype=float)
        n = params.block_size
        if vector.shape[0] < 2 * n:
            raise DimensionError(f"policy vector needs {2 * n} entries, got {vector.shape[0]}")
        return cls(q_e=params.split(vector[:n]), q_b=params.split(vector[n:2 * n]))

    @classmethod
    def zeros(cls, params: SystemParams) -> 'JointPolicy':
        return cls(q_e=tuple(np.zeros(n) for n in params.level_counts),
                   q_b=tuple(np.zeros(n) for n in params.level_counts))

    def clipped(self) -> 'JointPolicy':
        """Copy with tiny negative solver noise set to zero."""
        return JointPolicy(q_e=tuple(np.maximum(t, 0.0) for t in self.q_e),
                           q_b=tuple(np.maximum(t, 0.0) for t in self.q_b))

    def to_rows(self) -> List[Dict[str, object]]:
        rows = []
        for state, tables in ((STATE_IDLE, self.q_e), (STATE_BUSY, self.q_b)):
            for s, row in enumerate(tables):
                for i, value in enumerate(row):
                    rows.append({'state': state, 'su': s, 'level': i, 'probability': float(value)})
        return rows

    @classmethod
    def from_rows(cls, params: SystemParams, rows: Iterable[Dict[str, object]]) -> 'JointPolicy':
        q_e = [np.zeros(n) for n in params.level_counts]
        q_b = [np.zeros(n) for n in params.level_counts]
        for row in rows:
            s, i = int(row['su']), int(row['level'])
            if not (0 <= s < params.num_sus and 0 <= i < params.num_levels(s)):
                raise DimensionError(f"policy row refers to unknown (su={s}, level={i})")
            target = {STATE_IDLE: q_e, STATE_BUSY: q_b}.get(str(row['state']))
            if target is None:
                raise InvalidPolicyError(f"unknown policy state {row['state']!r}")
            target[s][i] = float(row['probability'])
        return cls(q_e=tuple(q_e), q_b=tuple(q_b))

    def to_dict(self) -> Dict[str, List[List[float]]]:
        return {'q_e': [t.tolist() for t in self.q_e], 'q_b': [t.tolist() for t in self.q_b]}


@dataclass(frozen=True)
class ConditionalPolicy:
    """Busy probability plus the busy/idle conditional action tables."""

    busy_prob: float
    cond_busy: Tuple[np.ndarray, ...]
    cond_idle: Tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, 'busy_prob', float(self.busy_prob))
        object.__setattr__(self, 'cond_busy', _tables(self.cond_busy))
        object.__setattr__(self, 'cond_idle', _tables(self.cond_idle))
        if _shape(self.cond_busy) != _shape(self.cond_idle):
            raise DimensionError("busy and idle conditional tables have different shapes")

    @property
    def idle_prob(self) -> float:
        return 1.0 - self.busy_prob

    @property
    def num_sus(self) -> int:
        return len(self.cond_busy)

    def check(self, tol: float = NORMALIZATION_TOL) -> 'ConditionalPolicy':
        """
        Raise InvalidPolicyError unless the busy probability is in [0,1], tables
        are nonnegative, and each table sums to 1. A table on a side with zero
        probability may be all zeros.
        """
        if not (-tol <= self.busy_prob <= 1.0 + tol):
            raise InvalidPolicyError(f"busy probability {self.busy_prob} outside [0,1]")
        for label, tables, side_prob in (('cond_busy', self.cond_busy, self.busy_prob),
                                         ('cond_idle', self.cond_idle, self.idle_prob)):
            _check_nonnegative(tables, label, tol)
            mass = _total(tables)
            degenerate = side_prob <= tol and mass <= tol
            if not degenerate and abs(mass - 1.0) > tol:
                raise InvalidPolicyError(f"{label} sums to {mass!r}, expected 1")
        return self

    def with_busy_prob(self, busy_prob: float) -> 'ConditionalPolicy':
        return ConditionalPolicy(busy_prob, self.cond_busy, self.cond_idle)

    def normalized(self) -> 'ConditionalPolicy':
        """Clip negatives and rescale each nonzero table to sum exactly to 1."""
        def norm(tables):
            clipped = [np.maximum(t, 0.0) for t in tables]
            mass = sum(float(np.sum(t)) for t in clipped)
            return tuple(t / mass for t in clipped) if mass > 0 else tuple(clipped)
        return ConditionalPolicy(min(max(self.busy_prob, 0.0), 1.0),
                                 norm(self.cond_busy), norm(self.cond_idle))


@dataclass(frozen=True)
class C2Policy:
    """Probabilities of the controls (1,s,i) (PU transmits, SU s helps) and (0,s,i)."""

    p1: Tuple[np.ndarray, ...]
    p0: Tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, 'p1', _tables(self.p1))
        object.__setattr__(self, 'p0', _tables(self.p0))
        if _shape(self.p1) != _shape(self.p0):
            raise DimensionError("p1 and p0 have different shapes")

    @property
    def pu_share(self) -> float:
        """p(1): total probability that the PU transmits."""
        return _total(self.p1)

    def check(self, tol: float = NORMALIZATION_TOL) -> 'C2Policy':
        _check_nonnegative(self.p1, 'p1', tol)
        _check_nonnegative(self.p0, 'p0', tol)
        mass = _total(self.p1) + _total(self.p0)
        if abs(mass - 1.0) > tol:
            raise InvalidPolicyError(f"C2 policy mass {mass!r} differs from 1")
        return self

    @classmethod
    def from_vector(cls, params: SystemParams, vector: np.ndarray) -> 'C2Policy':
        n = params.block_size
        return cls(p1=params.split(vector[n:2 * n]), p0=params.split(vector[:n]))


def to_joint(cond: ConditionalPolicy) -> JointPolicy:
    """q_e[s][i] = q_e·q(s,i|e) and q_b[s][i] = q_b·q(s,i|b)."""
    cond.check()
    q_b = cond.busy_prob
    q_e = cond.idle_prob
    return JointPolicy(q_e=tuple(q_e * t for t in cond.cond_idle),
                       q_b=tuple(q_b * t for t in cond.cond_busy))


def to_conditional(joint: JointPolicy) -> ConditionalPolicy:
    """
    Normalize each state block. A block with zero mass yields an all-zero
    conditional table.
    """
    joint.check()
    busy = joint.busy_mass
    idle = joint.idle_mass

    def cond(tables, mass):
        if mass <= 0.0:
            return tuple(np.zeros_like(t) for t in tables)
        return tuple(t / mass for t in tables)

    return ConditionalPolicy(busy_prob=busy / (busy + idle),
                             cond_busy=cond(joint.q_b, busy),
                             cond_idle=cond(joint.q_e, idle))
