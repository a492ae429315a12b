import json
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd

from gapflow import __version__

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.17g'


@dataclass
class ResultTable:
    """Output of one subcommand: a table (CSV) or a record (JSON)."""
    name: str
    frame: Optional[pd.DataFrame] = None
    record: Optional[Dict[str, Any]] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    @property
    def columns(self) -> List[str]:
        return list(self.frame.columns) if self.frame is not None else sorted(self.record or {})


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        obj = float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else str(obj)
    return obj


def write_json(obj: Any, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        json.dump(_plain(obj), f, indent=2, default=str)
    return path


def write_csv(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def write_result(table: ResultTable, out_dir: Union[str, Path]) -> List[Path]:
    out_dir = Path(out_dir)
    paths = []
    if table.frame is not None:
        paths.append(write_csv(table.frame, out_dir / f'{table.name}.csv'))
    if table.record is not None:
        paths.append(write_json(table.record, out_dir / f'{table.name}.json'))
    for suffix, frame in table.extra.items():
        paths.append(write_csv(frame, out_dir / f'{table.name}_{suffix}.csv'))
    return paths


def write_provenance(config_echo: Dict[str, Any], started: datetime, wall_time_s: float,
                     out_dir: Union[str, Path], status: str = 'ok') -> Path:
    return write_json({
        'config': config_echo,
        'version': __version__,
        'started': started.isoformat(timespec='seconds'),
        'wall_time_s': wall_time_s,
        'status': status,
    }, Path(out_dir) / 'provenance.json')
