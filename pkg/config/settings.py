"""
Run settings for the coopradio CLI.
Handles environment variables, output locations and logging setup.
"""

import logging
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict

from utils.errors import ConfigError

VALID_LOG_LEVELS = ['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL']
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
LOG_FILE = 'coopradio.log'


def _env_number(name: str, default: str, cast, errors: list):
    raw = os.getenv(name, default)
    try:
        return cast(raw)
    except ValueError:
        errors.append(f"{name}={raw!r} is not a valid {cast.__name__}")
        return cast(default)


@dataclass
class RunSettings:
    """Defaults shared by every subcommand; CLI flags override them."""

    output_dir: str = "outputs"
    log_level: str = "INFO"
    log_dir: str = "logs"
    workers: int = 1
    admm_rho: float = 0.1
    admm_eps: float = 1e-5
    admm_max_iter: int = 100_000

    @classmethod
    def from_env(cls) -> 'RunSettings':
        """Create settings from COOPRADIO_* environment variables."""
        errors: list = []
        settings = cls(
            output_dir=os.getenv('COOPRADIO_OUTPUT_DIR', 'outputs'),
            log_level=os.getenv('COOPRADIO_LOG_LEVEL', 'INFO'),
            log_dir=os.getenv('COOPRADIO_LOG_DIR', 'logs'),
            workers=_env_number('COOPRADIO_WORKERS', '1', int, errors),
            admm_rho=_env_number('COOPRADIO_ADMM_RHO', '0.1', float, errors),
            admm_eps=_env_number('COOPRADIO_ADMM_EPS', '1e-5', float, errors),
            admm_max_iter=_env_number('COOPRADIO_ADMM_MAX_ITER', '100000', int, errors),
        )
        if errors:
            raise ConfigError("Environment settings are malformed:\n" + "\n".join(f"  - {e}" for e in errors))
        return settings

    def validate(self) -> 'RunSettings':
        """Validate settings, reporting every problem at once."""
        errors = []

        if self.workers < 1:
            errors.append("Worker count must be at least 1")
        if not self.admm_rho > 0:
            errors.append("ADMM penalty parameter must be positive")
        if not self.admm_eps > 0:
            errors.append("ADMM tolerance must be positive")
        if self.admm_max_iter < 1:
            errors.append("ADMM iteration cap must be positive")
        if not self.output_dir:
            errors.append("Output directory must not be empty")
        if self.log_level.upper() not in VALID_LOG_LEVELS:
            errors.append(f"Invalid log level '{self.log_level}'. Must be one of: {', '.join(VALID_LOG_LEVELS)}")

        if errors:
            raise ConfigError("Configuration validation failed:\n" + "\n".join(f"  - {e}" for e in errors),
                              {'errors': errors})
        return self

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def load_settings() -> RunSettings:
    """Load and validate run settings from the environment."""
    try:
        return RunSettings.from_env().validate()
    except ConfigError as e:
        logging.error(f"Failed to load run settings: {e}")
        raise


def setup_logging(settings: RunSettings) -> None:
    """Send log records to logs/coopradio.log and to stderr."""
    log_level = getattr(logging, settings.log_level.upper())

    logs_dir = Path(settings.log_dir)
    logs_dir.mkdir(parents=True, exist_ok=True)

    logging.basicConfig(
        level=log_level,
        format=LOG_FORMAT,
        handlers=[
            logging.FileHandler(logs_dir / LOG_FILE),
            logging.StreamHandler()
        ],
        force=True,
    )
