"""
System parameters for one primary user (PU) and a set of secondary users (SUs).

Power-level tables are ragged: SU s has its own vector of levels 0..I_s, level 0
always meaning "no transmission" with zero power.
"""

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from utils.errors import DimensionError


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class SystemParams:
    """Immutable description of the channel, the SUs and the PU traffic."""

    power_levels: Tuple[np.ndarray, ...]
    su_success: Tuple[np.ndarray, ...]
    coop_success: Tuple[np.ndarray, ...]
    solo_success: float
    power_budget: np.ndarray
    pu_arrival_rate: float
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, 'power_levels', tuple(_frozen(v) for v in self.power_levels))
        object.__setattr__(self, 'su_success', tuple(_frozen(v) for v in self.su_success))
        object.__setattr__(self, 'coop_success', tuple(_frozen(v) for v in self.coop_success))
        object.__setattr__(self, 'power_budget', _frozen(self.power_budget))
        object.__setattr__(self, 'solo_success', float(self.solo_success))
        object.__setattr__(self, 'pu_arrival_rate', float(self.pu_arrival_rate))

    @property
    def num_sus(self) -> int:
        return len(self.power_levels)

    def num_levels(self, s: int) -> int:
        """Number of levels of SU s, level 0 included."""
        return len(self.power_levels[s])

    @property
    def level_counts(self) -> List[int]:
        return [len(p) for p in self.power_levels]

    @property
    def block_size(self) -> int:
        """Entries in one state block (idle or busy) of a joint policy."""
        return sum(self.level_counts)

    @property
    def block_offsets(self) -> List[int]:
        offsets = [0]
        for n in self.level_counts:
            offsets.append(offsets[-1] + n)
        return offsets

    @property
    def max_coop_success(self) -> float:
        return max(float(np.max(r)) for r in self.coop_success)

    def with_arrival_rate(self, pu_arrival_rate: float) -> 'SystemParams':
        return replace(self, pu_arrival_rate=pu_arrival_rate)

    def with_budget(self, power_budget: Sequence[float]) -> 'SystemParams':
        return replace(self, power_budget=power_budget)

    def flat(self, tables: Tuple[np.ndarray, ...]) -> np.ndarray:
        """Concatenate a per-SU table (e.g. ``su_success``) into one block vector."""
        return np.concatenate([np.asarray(t, dtype=float) for t in tables])

    def split(self, vector: np.ndarray) -> Tuple[np.ndarray, ...]:
        """Inverse of :meth:`flat` for one block."""
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (self.block_size,):
            raise DimensionError(
                f"expected a block of {self.block_size} entries, got shape {vector.shape}")
        offsets = self.block_offsets
        return tuple(vector[offsets[s]:offsets[s + 1]].copy() for s in range(self.num_sus))

    def check_tables(self, tables, label: str) -> None:
        """Raise DimensionError unless ``tables`` has one row per SU of matching length."""
        if len(tables) != self.num_sus:
            raise DimensionError(f"{label}: expected {self.num_sus} SU rows, got {len(tables)}")
        for s, row in enumerate(tables):
            if len(row) != self.num_levels(s):
                raise DimensionError(
                    f"{label}: SU {s} expects {self.num_levels(s)} levels, got {len(row)}")


@dataclass(frozen=True)
class Violation:
    """One violated parameter constraint."""
    code: str
    message: str
    index: Optional[Tuple[int, ...]] = None
    details: dict = field(default_factory=dict)


class ParamsValidator:
    """Collects every violated constraint of a SystemParams instance."""

    def __init__(self, params: SystemParams, tol: float = 0.0):
        self.params = params
        self.tol = tol
        self.issues: List[Violation] = []

    def add_issue(self, code: str, message: str, index: Tuple[int, ...] = None, **details):
        self.issues.append(Violation(code=code, message=message, index=index, details=details))

    def run(self) -> List[Violation]:
        if self._validate_shapes():
            self._validate_levels()
            self._validate_probabilities()
            self._validate_coop_monotone()
        self._validate_scalars()
        return self.issues

    def _validate_shapes(self) -> bool:
        p = self.params
        if p.num_sus < 1:
            self.add_issue('num_sus', "num_sus must be at least 1")
            return False
        ok = True
        for label, tables in (('su_success', p.su_success), ('coop_success', p.coop_success)):
            if len(tables) != p.num_sus:
                self.add_issue('shape', f"{label} has {len(tables)} rows, expected {p.num_sus}")
                ok = False
                continue
            for s, row in enumerate(tables):
                if len(row) != p.num_levels(s):
                    self.add_issue('shape', f"{label} row {s} has {len(row)} levels, "
                                            f"expected {p.num_levels(s)}", (s,))
                    ok = False
        if len(p.power_budget) != p.num_sus:
            self.add_issue('shape', f"power_budget has {len(p.power_budget)} entries, "
                                    f"expected {p.num_sus}")
            ok = False
        for s in range(p.num_sus):
            if p.num_levels(s) < 1:
                self.add_issue('shape', f"power_levels row {s} is empty", (s,))
                ok = False
        return ok

    def _validate_levels(self):
        for s, levels in enumerate(self.params.power_levels):
            if not np.all(np.isfinite(levels)):
                self.add_issue('finite', f"power_levels row {s} has non-finite entries", (s,))
                continue
            if levels[0] != 0.0:
                self.add_issue('level_zero', f"power_levels[{s}][0] must be 0, got {levels[0]}", (s, 0))
            for i in range(1, len(levels)):
                if not levels[i] > levels[i - 1]:
                    self.add_issue('power_monotone',
                                   f"power_levels not strictly increasing at ({s},{i})", (s, i))
            for i in np.flatnonzero(levels < 0):
                self.add_issue('power_negative', f"power_levels negative at ({s},{i})", (s, int(i)))

    def _validate_probabilities(self):
        p = self.params
        for label, tables in (('su_success', p.su_success), ('coop_success', p.coop_success)):
            for s, row in enumerate(tables):
                for i, value in enumerate(row):
                    if not (math.isfinite(value) and 0.0 <= value <= 1.0):
                        self.add_issue('probability', f"{label}[{s}][{i}]={value} outside [0,1]", (s, i))
        for s, row in enumerate(p.su_success):
            if len(row) and row[0] != 0.0:
                self.add_issue('su_level_zero', f"su_success[{s}][0] must be 0, got {row[0]}", (s, 0))
        for s, row in enumerate(p.coop_success):
            if len(row) and abs(row[0] - p.solo_success) > self.tol:
                self.add_issue('coop_level_zero',
                               f"coop_success[{s}][0]={row[0]} differs from solo_success={p.solo_success}",
                               (s, 0))

    def _validate_coop_monotone(self):
        for s, row in enumerate(self.params.coop_success):
            for i in range(1, len(row)):
                if row[i] < row[i - 1] - self.tol:
                    self.add_issue('coop_monotone', f"coop_success not monotone at ({s},{i})", (s, i))

    def _validate_scalars(self):
        p = self.params
        if not (math.isfinite(p.solo_success) and 0.0 <= p.solo_success <= 1.0):
            self.add_issue('probability', f"solo_success={p.solo_success} outside [0,1]")
        for s, budget in enumerate(p.power_budget):
            if not (math.isfinite(budget) and budget >= 0.0):
                self.add_issue('budget', f"power_budget[{s}]={budget} must be finite and >= 0", (s,))
        if not (math.isfinite(p.pu_arrival_rate) and p.pu_arrival_rate >= 0.0):
            self.add_issue('arrival_rate', f"pu_arrival_rate={p.pu_arrival_rate} must be finite and >= 0")


def validate(params: SystemParams) -> List[Violation]:
    """Return every violated constraint; an empty list means the instance is valid."""
    return ParamsValidator(params).run()


def make_params(power_levels, su_success, coop_success, solo_success, power_budget,
                pu_arrival_rate: float = 0.0, name: str = "") -> SystemParams:
    """Build a SystemParams, broadcasting a scalar budget to every SU."""
    budget = np.broadcast_to(np.asarray(power_budget, dtype=float), (len(power_levels),))
    return SystemParams(power_levels=tuple(power_levels), su_success=tuple(su_success),
                        coop_success=tuple(coop_success), solo_success=solo_success,
                        power_budget=budget, pu_arrival_rate=pu_arrival_rate, name=name)


def symmetric_params(num_sus: int, power_levels, su_success, coop_success, solo_success,
                     power_budget, pu_arrival_rate: float = 0.0, name: str = "") -> SystemParams:
    """Instance where every SU shares the same level tables."""
    return make_params([power_levels] * num_sus, [su_success] * num_sus,
                       [coop_success] * num_sus, solo_success, power_budget,
                       pu_arrival_rate, name)
