"""
Settings access and run-configuration loading.

Process-wide defaults live in ``settings.SECURE_KG``; a run is described by
a JSON (or YAML) file validated by :class:`RunConfigSerializer`.
"""
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml
from django.conf import settings

from .numeric import FixedPointConfig

DEFAULTS = {
    'FRAC_BITS': 16,
    'MAGNITUDE_BOUND': float(2 ** 20),
    'DEFAULT_SEED': 2021,
    'DIV_ITERATIONS': 15,
    'COMPARE_MASK_BITS': 20,
    'PSI_GROUP': 'x25519',
    'LINK_THRESHOLD': 0.55,
    'FEATURE_DIM': 128,
    'OUTPUT_DIR': Path('runs'),
}


def secure_kg_setting(name):
    return getattr(settings, 'SECURE_KG', {}).get(name, DEFAULTS[name])


@dataclass(frozen=True)
class PartySource:
    triples: Path
    properties: Path
    keys: Path = None


@dataclass
class RunConfig:
    parties: list
    schema: tuple
    fixed_point: FixedPointConfig
    policy: dict = field(default_factory=dict)
    relations: dict = field(default_factory=dict)
    seed: int = 0
    dealer: str = 'online'
    dealer_file: Path = None
    link_threshold: float = 0.55
    feature_dim: int = 128
    psi_group: str = 'x25519'
    base_dir: Path = Path('.')

    @property
    def party_count(self):
        return len(self.parties)


def read_config_file(path):
    path = Path(path)
    with open(path, encoding='utf-8') as handle:
        if path.suffix.lower() in ('.yaml', '.yml'):
            return yaml.safe_load(handle) or {}
        return json.load(handle)


def _resolve(base, value):
    if value in (None, ''):
        return None
    value = Path(value)
    return value if value.is_absolute() else (base / value).resolve()


def load_run_config(path, seed=None):
    """Validate a run config file; relative paths resolve against its directory."""
    from .serializers import RunConfigSerializer

    path = Path(path)
    serializer = RunConfigSerializer(data=read_config_file(path))
    serializer.is_valid(raise_exception=True)
    data = serializer.validated_data
    base = path.resolve().parent
    fixed = data.get('fixed_point') or {}
    dealer = data.get('dealer') or {}
    return RunConfig(
        parties=[PartySource(_resolve(base, p['triples']), _resolve(base, p['properties']),
                             _resolve(base, p.get('keys'))) for p in data['parties']],
        schema=serializer.slot_schema(),
        fixed_point=FixedPointConfig(
            frac_bits=fixed.get('frac_bits', secure_kg_setting('FRAC_BITS')),
            magnitude_bound=fixed.get('magnitude_bound', secure_kg_setting('MAGNITUDE_BOUND')),
        ),
        policy=data.get('policy', {}),
        relations=data.get('relations', {}),
        seed=seed if seed is not None else data.get('seed', secure_kg_setting('DEFAULT_SEED')),
        dealer=dealer.get('mode', 'online'),
        dealer_file=_resolve(base, dealer.get('file')),
        link_threshold=data.get('link_threshold', secure_kg_setting('LINK_THRESHOLD')),
        feature_dim=data.get('feature_dim', secure_kg_setting('FEATURE_DIM')),
        psi_group=data.get('psi_group', secure_kg_setting('PSI_GROUP')),
        base_dir=base,
    )
