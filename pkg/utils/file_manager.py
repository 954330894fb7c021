"""
File Manager Module
Handles the output directory layout and CSV/JSON artifact writing for runs
"""
import csv
import json
import logging
import math
import os
import re
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import numpy as np

logger = logging.getLogger(__name__)


def to_jsonable(value: Any) -> Any:
    """Plain JSON types; numpy values become lists/floats and non-finite floats become null."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def _cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    return str(value)


class ArtifactWriter:
    """Writes the artifacts of one subcommand under ``<base>/<command>/``"""

    def __init__(self, base_dir: str = "outputs", command: str = "run"):
        self.base_dir = Path(base_dir)
        self.command = command
        self.run_dir = self.base_dir / self._sanitize_filename(command)
        self.written: List[str] = []

    def prepare(self) -> Path:
        """Create the run directory"""
        os.makedirs(self.run_dir, exist_ok=True)
        return self.run_dir

    def path(self, filename: str) -> Path:
        return self.run_dir / self._sanitize_filename(filename)

    def write_json(self, filename: str, data: Dict[str, Any]) -> Path:
        target = self.path(filename)
        self.prepare()
        with open(target, 'w') as f:
            json.dump(to_jsonable(data), f, indent=2, sort_keys=True)
            f.write('\n')
        self._log_file_operation('json', target)
        return target

    def write_csv(self, filename: str, rows: Iterable[Dict[str, Any]],
                  columns: Optional[List[str]] = None) -> Path:
        """Comma-separated rows with a header; floats written with repr so reruns are byte-identical."""
        rows = list(rows)
        if columns is None:
            columns = []
            for row in rows:
                columns.extend(k for k in row if k not in columns)
        target = self.path(filename)
        self.prepare()
        with open(target, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_cell(row.get(c, '')) for c in columns])
        self._log_file_operation('csv', target, rows=len(rows))
        return target

    def list_files(self) -> List[str]:
        return list(self.written)

    def _sanitize_filename(self, filename: str) -> str:
        """Keep names portable: letters, digits, dot, dash and underscore only"""
        return re.sub(r'[^A-Za-z0-9._-]', '_', filename)

    def _log_file_operation(self, operation: str, file_path: Path, **extra):
        self.written.append(str(file_path))
        logger.debug(f"wrote {operation} artifact {file_path} {extra if extra else ''}".rstrip())
