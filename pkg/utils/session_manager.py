"""
Session Manager Module
Records what a run consumed and produced so it can be repeated exactly
"""
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime
from typing import Any, Dict, List, Optional

import numpy as np
import pydantic

from utils.file_manager import ArtifactWriter

MANIFEST_FILE = "manifest.json"


def package_versions() -> Dict[str, str]:
    return {
        'python': platform.python_version(),
        'numpy': np.__version__,
        'pydantic': pydantic.VERSION,
    }


@dataclass
class RunManifest:
    """Run metadata: inputs, seeds, versions, timing and artifacts"""
    command: str
    argv: List[str]
    spec: Dict[str, Any]
    params: Optional[Dict[str, Any]] = None
    seeds: List[int] = field(default_factory=list)
    settings: Dict[str, Any] = field(default_factory=dict)
    versions: Dict[str, str] = field(default_factory=package_versions)
    started_at: str = field(default_factory=lambda: datetime.now().isoformat())
    wall_time: float = 0.0
    status: str = 'running'
    exit_code: Optional[int] = None
    artifacts: List[str] = field(default_factory=list)
    errors: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


class RunSession:
    """Times one CLI invocation and writes its manifest next to the artifacts"""

    def __init__(self, writer: ArtifactWriter, command: str, spec: Dict[str, Any],
                 argv: Optional[List[str]] = None, settings: Optional[Dict[str, Any]] = None):
        self.writer = writer
        self.manifest = RunManifest(command=command, argv=list(sys.argv if argv is None else argv),
                                    spec=spec, settings=settings or {})
        self._started = time.perf_counter()

    def record_params(self, params: Dict[str, Any]):
        self.manifest.params = params

    def record_seeds(self, seeds: List[int]):
        self.manifest.seeds = [int(s) for s in seeds]

    def record_errors(self, statistics: Dict[str, Any]):
        self.manifest.errors = statistics

    def finish(self, exit_code: int, status: str = None):
        self.manifest.wall_time = time.perf_counter() - self._started
        self.manifest.exit_code = exit_code
        self.manifest.status = status or ('completed' if exit_code == 0 else 'failed')
        self.manifest.artifacts = [p for p in self.writer.list_files()]
        return self.writer.write_json(MANIFEST_FILE, self.manifest.to_dict())
