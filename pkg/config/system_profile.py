# config/system_profile.py

import json
import logging
from pathlib import Path
from typing import List, Optional, Union

from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from model.params import SystemParams, make_params
from utils.errors import ConfigError

logger = logging.getLogger(__name__)

PROFILE_DIR = Path(__file__).resolve().parent
REFERENCE_INSTANCES = ('two_su', 'five_su')


class SystemProfileModel(BaseModel):
    """Schema of a system instance file; keys mirror the SystemParams fields."""

    model_config = ConfigDict(extra='forbid')

    num_sus: int
    power_levels: List[List[float]]
    su_success: List[List[float]]
    coop_success: List[List[float]]
    solo_success: float
    power_budget: Union[float, List[float]]
    pu_arrival_rate: float = 0.0
    name: str = ""
    description: str = ""

    @model_validator(mode='after')
    def check_lengths(self) -> 'SystemProfileModel':
        if self.num_sus < 1:
            raise ValueError("num_sus must be at least 1")
        for label in ('power_levels', 'su_success', 'coop_success'):
            tables = getattr(self, label)
            if len(tables) != self.num_sus:
                raise ValueError(f"{label} has {len(tables)} rows for {self.num_sus} SUs")
            for s, (row, levels) in enumerate(zip(tables, self.power_levels)):
                if len(row) != len(levels):
                    raise ValueError(f"{label}[{s}] has {len(row)} entries for {len(levels)} power levels")
        if isinstance(self.power_budget, list) and len(self.power_budget) != self.num_sus:
            raise ValueError(f"power_budget has {len(self.power_budget)} entries for {self.num_sus} SUs")
        return self

    def to_params(self) -> SystemParams:
        return make_params(self.power_levels, self.su_success, self.coop_success, self.solo_success,
                           self.power_budget, self.pu_arrival_rate, self.name)

    @classmethod
    def from_params(cls, params: SystemParams, description: str = "") -> 'SystemProfileModel':
        return cls(
            num_sus=params.num_sus,
            power_levels=[t.tolist() for t in params.power_levels],
            su_success=[t.tolist() for t in params.su_success],
            coop_success=[t.tolist() for t in params.coop_success],
            solo_success=params.solo_success,
            power_budget=params.power_budget.tolist(),
            pu_arrival_rate=params.pu_arrival_rate,
            name=params.name,
            description=description,
        )


def resolve_profile_path(path_or_name: Union[str, Path]) -> Path:
    """A file path, or the name of a shipped reference instance."""
    candidate = Path(path_or_name)
    if candidate.exists():
        return candidate
    if str(path_or_name) in REFERENCE_INSTANCES:
        return PROFILE_DIR / f"{path_or_name}.json"
    raise ConfigError(f"params file {path_or_name} not found (reference instances: "
                      f"{', '.join(REFERENCE_INSTANCES)})")


def load_profile(path_or_name: Union[str, Path]) -> SystemProfileModel:
    path = resolve_profile_path(path_or_name)
    try:
        with open(path, 'r') as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read params file {path}: {e}")
    try:
        profile = SystemProfileModel.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"params file {path} does not match the schema:\n{e}",
                          {'errors': [err['msg'] for err in e.errors()]})
    if not profile.name:
        profile.name = path.stem
    logger.debug(f"loaded system instance {profile.name} from {path}")
    return profile


def load_params(path_or_name: Union[str, Path], pu_arrival_rate: Optional[float] = None) -> SystemParams:
    """Load a system instance, optionally overriding its PU arrival rate."""
    params = load_profile(path_or_name).to_params()
    if pu_arrival_rate is not None:
        params = params.with_arrival_rate(pu_arrival_rate)
    return params


def save_params(params: SystemParams, path: Union[str, Path], description: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    profile = SystemProfileModel.from_params(params, description)
    with open(path, 'w') as f:
        json.dump(profile.model_dump(), f, indent=2, sort_keys=True)
    return path
