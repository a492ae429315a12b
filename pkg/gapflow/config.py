import copy
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import yaml

from gapflow.errors import ValidationError
from gapflow.models import (
    ZOO,
    Model,
    add_field,
    named_operator,
    perturb,
    toric_code_model,
)
from gapflow.stabilizer import build_surface

logger = logging.getLogger(__name__)

GRID_DIGITS = 12
GRID_PATTERN = re.compile(r'^\s*-?[0-9.]+:-?[0-9.]+:[0-9.]+\s*$')

SUBCOMMANDS = (
    'gap-scan', 'splitting', 'lr-cone', 'flow', 'flow-identity', 'locality',
    'decompose', 'symmetry', 'entropy-scan', 'topo-degeneracy', 'topo-entropy',
)

COMMON_DEFAULTS = {
    'model': {'name': 'tfim', 'N': 8, 'bc': 'open'},
    'm': None,
    'delta': None,
    'workers': None,
    'seed': 42,
    'progress': False,
    'out': None,
}

DEFAULTS: Dict[str, Dict[str, Any]] = {
    'gap-scan': {'sizes': '6:12:2', 'lambdas': '0:2:0.1'},
    'splitting': {'sizes': '6:12:2', 'lambda': 0.5},
    'lr-cone': {
        'lambda': 1.0, 'a_op': 'Z', 'b_op': 'Z', 'a_site': 0,
        'distances': '1:6:1', 'times': '0:3:0.25', 'epsilon': None,
    },
    'flow': {
        'lambda0': 1.2, 'lambda1': 2.0, 'steps': 400, 'gamma': None, 'min_gap': 0.0,
        'cocycle': True, 'refine': None,
    },
    'flow-identity': {'lambda': 1.5, 'gamma': None, 'h': [1e-3, 5e-4, 2.5e-4]},
    'locality': {
        'lambda0': 1.3, 'lambda1': 1.9, 'steps': 200, 'gamma': None,
        'op': 'Z', 'center': None, 'radii': None,
    },
    'decompose': {'lambda': 1.5, 'gamma': None, 'center': None},
    'symmetry': {
        'lambdas': '1.3:1.9:0.15', 'lambda0': 1.2, 'lambda1': 2.0, 'steps': 100,
        'gamma': None, 'symmetry_op': 'Z', 'control_op': None, 'control_strength': 0.0,
    },
    'entropy-scan': {'lambdas': [1.0, 2.0], 'ells': None},
    'topo-degeneracy': {
        'surfaces': [
            {'kind': 'planar', 'Lx': 3, 'Ly': 3, 'boundary': 'smooth'},
            {'kind': 'planar', 'Lx': 3, 'Ly': 3, 'boundary': 'rough'},
            {'kind': 'planar', 'Lx': 3, 'Ly': 3, 'boundary': 'mixed'},
            {'kind': 'torus', 'Lx': 2, 'Ly': 2},
            {'kind': 'torus', 'Lx': 3, 'Ly': 3},
            {'kind': 'torus', 'Lx': 4, 'Ly': 4},
            {'kind': 'genus', 'g': 2, 'size': 3},
        ],
    },
    'topo-entropy': {'surface': {'kind': 'torus', 'Lx': 4, 'Ly': 4}, 'state': 'toric', 'regions': None},
}


@dataclass
class JobConfig:
    subcommand: str
    params: Dict[str, Any] = field(default_factory=dict)

    def __getitem__(self, key):
        return self.params[key]

    def get(self, key, default=None):
        return self.params.get(key, default)

    @property
    def out_dir(self) -> Path:
        return Path(self.params['out'])

    def echo(self) -> Dict[str, Any]:
        return {'subcommand': self.subcommand, **copy.deepcopy(self.params)}


def _deep_merge(base: Dict, extra: Dict) -> Dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_document(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"config file not found: {path}")
    with open(path) as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ValidationError(f"cannot parse {path}: {e}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValidationError(f"{path} must hold a mapping, got {type(data).__name__}")
    return data


def apply_overrides(data: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    """Apply key=value pairs; dotted keys address nested mappings, values are YAML-typed."""
    data = copy.deepcopy(data)
    for item in overrides or ():
        if '=' not in item:
            raise ValidationError(f"override {item!r} is not key=value")
        key, raw = item.split('=', 1)
        # YAML 1.1 would read start:stop:step as a base-60 number
        if GRID_PATTERN.match(raw):
            value = raw.strip()
        else:
            try:
                value = yaml.safe_load(raw)
            except yaml.YAMLError:
                value = raw
        node = data
        parts = key.strip().split('.')
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                node[p] = {}
            node = node[p]
        node[parts[-1]] = value
    return data


def make_config(subcommand: str, document: Optional[Dict[str, Any]] = None,
                overrides: Iterable[str] = (), out: Optional[str] = None) -> JobConfig:
    """Defaults < document < overrides < out."""
    if subcommand not in SUBCOMMANDS:
        raise ValidationError(f"unknown subcommand {subcommand!r}", {'known': list(SUBCOMMANDS)})
    document = dict(document or {})
    named = document.pop('subcommand', subcommand)
    if named != subcommand:
        raise ValidationError(f"config is for {named!r}, not {subcommand!r}")
    document.pop('name', None)
    params = _deep_merge(_deep_merge(COMMON_DEFAULTS, DEFAULTS[subcommand]), document)
    params = apply_overrides(params, overrides)
    if out is not None:
        params['out'] = out
    if params.get('out') is None:
        params['out'] = str(Path('results/raw') / subcommand)
    unknown = set(params) - set(COMMON_DEFAULTS) - set(DEFAULTS[subcommand])
    if unknown:
        raise ValidationError(f"unknown config keys for {subcommand}: {sorted(unknown)}")
    return JobConfig(subcommand, params)


def parse_grid(spec: Union[str, float, int, Sequence]) -> List[float]:
    """'start:stop:step' with inclusive stop, a scalar, or an explicit list."""
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return [float(spec)]
    if isinstance(spec, str):
        parts = spec.split(':')
        if len(parts) != 3:
            raise ValidationError(f"grid {spec!r} is not start:stop:step")
        try:
            start, stop, step = (float(p) for p in parts)
        except ValueError:
            raise ValidationError(f"grid {spec!r} has non-numeric bounds") from None
        if step <= 0 or stop < start:
            raise ValidationError(f"grid {spec!r} is empty or has non-positive step")
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + k * step, GRID_DIGITS) for k in range(count)]
    try:
        return [float(x) for x in spec]
    except (TypeError, ValueError):
        raise ValidationError(f"cannot read grid {spec!r}") from None


def parse_int_grid(spec) -> List[int]:
    values = parse_grid(spec)
    if any(v != int(v) for v in values):
        raise ValidationError(f"grid {spec!r} must contain integers")
    return [int(v) for v in values]


def model_builder(spec: Dict[str, Any]):
    """Callable N -> Model for a model spec {name, N, bc, ..., perturbation}."""
    spec = dict(spec)
    name = spec.pop('name', None)
    spec.pop('N', None)
    perturbation = spec.pop('perturbation', None)
    if name == 'toric':
        surface = build_surface(spec.get('surface', {'kind': 'torus', 'Lx': 2, 'Ly': 2}))
        return lambda n=None: toric_code_model(surface)
    if name not in ZOO:
        raise ValidationError(f"unknown model {name!r}", {'known': sorted(ZOO) + ['toric']})
    factory = ZOO[name]

    def build(n: int) -> Model:
        try:
            model = factory(int(n), **spec)
        except TypeError as e:
            raise ValidationError(f"bad parameters for {name}: {e}") from None
        if perturbation:
            op = named_operator(perturbation.get('op', 'X'), model.geometry.local_dims[0])
            strength = float(perturbation.get('strength', 0.1))
            if perturbation.get('path', True):
                return perturb(model, op, strength)
            return add_field(model, op, strength)
        return model

    return build


def build_model(spec: Dict[str, Any]) -> Model:
    return model_builder(spec)(spec.get('N'))
