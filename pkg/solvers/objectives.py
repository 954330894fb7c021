"""
Utility functions f(r̄) of the per-SU rate vector.

All objectives are concave and separable: f(r̄) = Σ_s f_s(r̄_s). The separable
components are what the distributed solver hands to each SU node.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from utils.errors import ConfigError, DimensionError

LOG_OFFSET = 1e-6


def _weights(weights, num_sus: int) -> np.ndarray:
    if weights is None:
        return np.ones(num_sus)
    w = np.asarray(weights, dtype=float)
    if w.shape != (num_sus,):
        raise DimensionError(f"objective has {w.shape[0]} weights for {num_sus} SUs")
    return w


class Objective(ABC):
    """Concave, separable utility of the SU rate vector."""

    kind = 'abstract'

    @property
    def is_linear(self) -> bool:
        return False

    @property
    def is_concave(self) -> bool:
        return True

    @abstractmethod
    def component(self, s: int, rate: float, num_sus: int) -> float:
        """f_s(rate)."""

    @abstractmethod
    def component_derivative(self, s: int, rate: float, num_sus: int) -> float:
        """f_s'(rate)."""

    def value(self, rates: np.ndarray) -> float:
        rates = np.asarray(rates, dtype=float)
        return float(sum(self.component(s, r, len(rates)) for s, r in enumerate(rates)))

    def gradient(self, rates: np.ndarray) -> np.ndarray:
        rates = np.asarray(rates, dtype=float)
        return np.array([self.component_derivative(s, r, len(rates)) for s, r in enumerate(rates)])

    def validate(self, num_sus: int) -> None:
        """Raise if the objective does not fit a system with ``num_sus`` SUs."""

    def describe(self) -> dict:
        return {'kind': self.kind}


@dataclass(frozen=True)
class WeightedSum(Objective):
    """f(r̄) = Σ_s w_s·r̄_s; ``weights=None`` means the plain sum rate."""

    weights: Optional[Sequence[float]] = None
    kind = 'weighted-sum'

    def __post_init__(self):
        if self.weights is not None:
            w = tuple(float(v) for v in self.weights)
            if any(v < 0 for v in w):
                raise ConfigError(f"weights must be nonnegative, got {w}")
            object.__setattr__(self, 'weights', w)

    @property
    def is_linear(self) -> bool:
        return True

    def weight_vector(self, num_sus: int) -> np.ndarray:
        return _weights(self.weights, num_sus)

    def component(self, s, rate, num_sus):
        return self.weight_vector(num_sus)[s] * rate

    def component_derivative(self, s, rate, num_sus):
        return float(self.weight_vector(num_sus)[s])

    def value(self, rates):
        rates = np.asarray(rates, dtype=float)
        return float(self.weight_vector(len(rates)) @ rates)

    def gradient(self, rates):
        return self.weight_vector(len(rates)).copy()

    def validate(self, num_sus):
        self.weight_vector(num_sus)

    def describe(self):
        return {'kind': self.kind, 'weights': None if self.weights is None else list(self.weights)}


@dataclass(frozen=True)
class LogUtility(Objective):
    """f(r̄) = Σ_s w_s·log(δ + r̄_s) (proportional fairness)."""

    offset: float = LOG_OFFSET
    weights: Optional[Sequence[float]] = None
    kind = 'log-utility'

    def __post_init__(self):
        if not self.offset > 0:
            raise ConfigError(f"log-utility offset must be positive, got {self.offset}")
        if self.weights is not None:
            w = tuple(float(v) for v in self.weights)
            if any(v < 0 for v in w):
                raise ConfigError(f"weights must be nonnegative, got {w}")
            object.__setattr__(self, 'weights', w)

    def component(self, s, rate, num_sus):
        return _weights(self.weights, num_sus)[s] * np.log(self.offset + rate)

    def component_derivative(self, s, rate, num_sus):
        return _weights(self.weights, num_sus)[s] / (self.offset + rate)

    def value(self, rates):
        rates = np.asarray(rates, dtype=float)
        return float(_weights(self.weights, len(rates)) @ np.log(self.offset + rates))

    def gradient(self, rates):
        rates = np.asarray(rates, dtype=float)
        return _weights(self.weights, len(rates)) / (self.offset + rates)

    def validate(self, num_sus):
        _weights(self.weights, num_sus)

    def describe(self):
        return {'kind': self.kind, 'offset': self.offset,
                'weights': None if self.weights is None else list(self.weights)}


@dataclass(frozen=True)
class Saturated(Objective):
    """f(min(λ_s, r̄_s)) for an inner objective f and per-SU arrival caps λ_s."""

    inner: Objective
    caps: Sequence[float]
    kind = 'saturated'

    def __post_init__(self):
        caps = tuple(float(v) for v in self.caps)
        if any(not v >= 0 for v in caps):
            raise ConfigError(f"throughput caps must be nonnegative, got {caps}")
        if isinstance(self.inner, Saturated):
            raise ConfigError("saturated objectives cannot be nested")
        object.__setattr__(self, 'caps', caps)

    @property
    def is_linear(self) -> bool:
        return self.inner.is_linear

    @property
    def is_concave(self) -> bool:
        return self.inner.is_concave

    def capped(self, rates: np.ndarray) -> np.ndarray:
        return np.minimum(np.asarray(rates, dtype=float), np.asarray(self.caps))

    def component(self, s, rate, num_sus):
        return self.inner.component(s, min(rate, self.caps[s]), num_sus)

    def component_derivative(self, s, rate, num_sus):
        return 0.0 if rate > self.caps[s] else self.inner.component_derivative(s, rate, num_sus)

    def value(self, rates):
        return self.inner.value(self.capped(rates))

    def gradient(self, rates):
        rates = np.asarray(rates, dtype=float)
        return np.where(rates > np.asarray(self.caps), 0.0, self.inner.gradient(self.capped(rates)))

    def validate(self, num_sus):
        if len(self.caps) != num_sus:
            raise DimensionError(f"{len(self.caps)} throughput caps for {num_sus} SUs")
        self.inner.validate(num_sus)

    def describe(self):
        return {'kind': self.kind, 'inner': self.inner.describe(), 'caps': list(self.caps)}


def parse_objective(name: str, weights: Optional[Sequence[float]] = None,
                    offset: float = LOG_OFFSET) -> Objective:
    """Objective from a CLI name: ``sum``, ``weighted`` or ``log``."""
    if name == 'sum':
        return WeightedSum()
    if name == 'weighted':
        if weights is None:
            raise ConfigError("objective 'weighted' needs --weights")
        return WeightedSum(weights)
    if name == 'log':
        return LogUtility(offset=offset, weights=weights)
    raise ConfigError(f"unknown objective {name!r}; expected sum, weighted or log")
