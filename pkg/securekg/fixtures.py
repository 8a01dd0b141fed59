"""Bundled run configs and random graph generators for checks and tests."""
from pathlib import Path

import numpy as np

from .kgstore import Entity, KnowledgeGraph, PlainCell, PropertySlot, SlotKind, Triple
from .features import canonical_key

DATA_DIR = Path(__file__).resolve().parent / 'data'

FIXTURES = {
    'companies': DATA_DIR / 'companies' / 'config.json',
    'guarantee': DATA_DIR / 'guarantee' / 'config.json',
}

RANDOM_SCHEMA = (PropertySlot('score', SlotKind.CONTINUOUS),)


def fixture_config(name):
    try:
        return FIXTURES[name]
    except KeyError:
        raise ValueError(f'Unknown fixture {name!r}; choose from {sorted(FIXTURES)}.') from None


def random_party_graphs(rng, size, parties=2, density=0.1, relations=(1, 2), names=None, schema=RANDOM_SCHEMA):
    """
    Plaintext graphs over ``size`` named entities spread across ``parties``.

    Each entity is owned by a random non-empty set of parties; each party
    draws edges among its own entities. Property values sit on a 0.5 grid.
    """
    names = list(names) if names is not None else [f'n{i:03d}' for i in range(size)]
    graphs = [KnowledgeGraph(party=p, schema=tuple(schema)) for p in range(1, parties + 1)]
    for name in names:
        owners = [p for p in range(1, parties + 1) if rng.random() < 0.6]
        if not owners:
            owners = [int(rng.integers(1, parties + 1))]
        for party in owners:
            kg = graphs[party - 1]
            index = kg.add_entity(Entity(name, canonical_key(name), owner_parties=frozenset({party})))
            kg.properties[index] = [PlainCell(float(rng.integers(-4, 5)) / 2) for _ in schema]
    for kg in graphs:
        for head in range(kg.size):
            for tail in range(kg.size):
                if head != tail and rng.random() < density:
                    kg.triples.append(Triple(head, int(rng.choice(relations)), tail))
    return graphs


def random_program(rng, names, relations=(1, 2), length=4, slot='score'):
    """A query program of ``length`` instructions after the start."""
    start = '*' if rng.random() < 0.2 else str(rng.choice(names))
    steps = [f'start {start}']
    for _ in range(int(rng.integers(0, length + 1))):
        kind = rng.choice(['out', 'in', 'where'])
        if kind == 'where':
            cmp = rng.choice(['>=', '<', '='])
            steps.append(f'where {slot} {cmp} {float(rng.integers(-4, 5)) / 2}')
        else:
            steps.append(f'{kind} {int(rng.choice(relations))}')
    return '; '.join(steps)


def random_vector(rng, size, low=-2.0, high=2.0):
    return np.round(rng.uniform(low, high, size=size), 4)
