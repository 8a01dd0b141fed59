"""
Per-party knowledge graph storage: a triple table and a property table.

Before merging a graph is indexed by local positions and holds plaintext
cells only. After merging, ``entities`` is the shared universe (position ==
global id), triples use global ids, and rows of common entities hold one
ring share per slot.
"""
import csv
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .exceptions import BadSlot, NotCommonEntity, ParseError, UnknownEntity, UnknownRelation
from .features import canonical_key
from .numeric import DEFAULT_CONFIG, RingValue, encode

logger = logging.getLogger(__name__)


class SlotKind(str, Enum):
    CONTINUOUS = 'continuous'
    DISCRETE = 'discrete'
    CATEGORICAL = 'categorical'


@dataclass(frozen=True)
class PropertySlot:
    name: str
    kind: SlotKind = SlotKind.CONTINUOUS
    categories: tuple = ()

    @property
    def is_categorical(self):
        return self.kind == SlotKind.CATEGORICAL

    @property
    def width(self):
        """Columns this slot takes in a merge encoding (one-hot for categories)."""
        return len(self.categories) if self.is_categorical else 1

    def category_index(self, value):
        try:
            return self.categories.index(value)
        except ValueError:
            raise BadSlot(f'{value!r} is not a category of slot {self.name!r}.') from None

    def parse(self, text):
        if self.is_categorical:
            return text
        return float(text)

    def numeric(self, value):
        """Value as the real that gets encoded (category index for categorical slots)."""
        return float(self.category_index(value)) if self.is_categorical else float(value)


def make_schema(items):
    """Schema from config dicts ``{"name", "kind", "categories"}``."""
    return tuple(
        PropertySlot(item['name'], SlotKind(item.get('kind', 'continuous')), tuple(item.get('categories', ())))
        for item in items
    )


@dataclass(frozen=True)
class PlainCell:
    value: object


@dataclass(frozen=True)
class SharedCell:
    share: RingValue


@dataclass
class Entity:
    local_name: str
    key: str
    global_id: int = None
    owner_parties: frozenset = frozenset()

    @property
    def is_common(self):
        return len(self.owner_parties) >= 2

    def __str__(self):
        return self.local_name


@dataclass(frozen=True)
class Triple:
    head: int
    relation: int
    tail: int


class RelationDictionary:
    """Relation names to the small integer ids used in triple tables."""

    def __init__(self, mapping=None):
        self._by_name = {name: int(rid) for name, rid in (mapping or {}).items()}
        self._by_id = {rid: name for name, rid in self._by_name.items()}

    def resolve(self, token):
        token = str(token).strip()
        if token in self._by_name:
            return self._by_name[token]
        if token.lstrip('-').isdigit():
            return int(token)
        raise UnknownRelation(f'Unknown relation {token!r}.')

    def name(self, relation_id):
        return self._by_id.get(relation_id, str(relation_id))

    def as_dict(self):
        return dict(self._by_name)

    def __contains__(self, token):
        try:
            self.resolve(token)
        except UnknownRelation:
            return False
        return True


@dataclass
class KnowledgeGraph:
    party: int
    schema: tuple
    entities: list = field(default_factory=list)
    triples: list = field(default_factory=list)
    properties: dict = field(default_factory=dict)
    merged: bool = False

    def __post_init__(self):
        self._index = {e.local_name: i for i, e in enumerate(self.entities)}

    def entity_index(self, name):
        try:
            return self._index[name]
        except KeyError:
            raise UnknownEntity(f'Party {self.party} has no entity {name!r}.') from None

    def add_entity(self, entity):
        self._index[entity.local_name] = len(self.entities)
        self.entities.append(entity)
        return len(self.entities) - 1

    @property
    def size(self):
        return len(self.entities)

    def own_entities(self):
        """Ids of entities this party holds a property row for."""
        return sorted(self.properties)

    def __str__(self):
        return f'Party {self.party}: {len(self.properties)} entities, {len(self.triples)} triples'


def _read_rows(path, delimiter=','):
    path = Path(path)
    if not path.exists() or path.stat().st_size == 0:
        return []
    with open(path, newline='', encoding='utf-8') as handle:
        return [(number, row) for number, row in enumerate(csv.reader(handle, delimiter=delimiter), start=1)
                if row and not row[0].startswith('#')]


def load_kg(triples_path, props_path, schema, party=1, keys_path=None, relations=None,
            allow_self_loops=False):
    """Load one party's plaintext graph from a triples TSV and a properties CSV."""
    relations = relations or RelationDictionary()
    kg = KnowledgeGraph(party=party, schema=tuple(schema))

    rows = _read_rows(props_path)
    if rows:
        (_, header), body = rows[0], rows[1:]
        if len(header) != len(schema) + 1 or header[0].strip() != 'entity':
            raise ParseError(f'expected header entity + {len(schema)} slots, got {header}', line=1, path=props_path)
        for number, row in body:
            if len(row) != len(schema) + 1:
                raise ParseError(f'expected {len(schema) + 1} fields, got {len(row)}', line=number, path=props_path)
            name = row[0].strip()
            try:
                cells = [slot.parse(text.strip()) for slot, text in zip(schema, row[1:])]
                for slot, value in zip(schema, cells):
                    slot.numeric(value)
            except (ValueError, BadSlot) as exc:
                raise ParseError(str(exc), line=number, path=props_path) from exc
            index = kg.add_entity(Entity(name, canonical_key(name), owner_parties=frozenset({party})))
            kg.properties[index] = [PlainCell(v) for v in cells]

    if keys_path is not None:
        for number, row in _read_rows(keys_path):
            if row[0].strip() == 'entity' and number == 1:
                continue
            if len(row) != 2:
                raise ParseError(f'expected entity,key got {row}', line=number, path=keys_path)
            try:
                kg.entities[kg.entity_index(row[0].strip())].key = canonical_key(row[1])
            except UnknownEntity as exc:
                raise UnknownEntity(f'{keys_path}:{number}: {exc}') from exc

    for number, row in _read_rows(triples_path, delimiter='\t'):
        if len(row) != 3:
            raise ParseError(f'expected head<TAB>relation<TAB>tail, got {len(row)} fields',
                             line=number, path=triples_path)
        head, relation, tail = (cell.strip() for cell in row)
        try:
            triple = Triple(kg.entity_index(head), relations.resolve(relation), kg.entity_index(tail))
        except UnknownEntity as exc:
            raise UnknownEntity(f'{triples_path}:{number}: {exc}') from exc
        except UnknownRelation as exc:
            raise ParseError(str(exc), line=number, path=triples_path) from exc
        if triple.head == triple.tail and not allow_self_loops:
            raise ParseError(f'self loop on {head!r}', line=number, path=triples_path)
        kg.triples.append(triple)

    logger.info('Loaded %s', kg)
    return kg


def encode_plain_row(cells, schema, config=DEFAULT_CONFIG):
    """Raw ring encoding of a plaintext row (categories by index)."""
    return np.array([encode(slot.numeric(cell.value), config).raw for slot, cell in zip(schema, cells)],
                    dtype=np.uint64)


def to_shared(graphs, entity_id, shared_row):
    """Replace every party's row for a common entity by its column of shares."""
    entity = graphs[0].entities[entity_id]
    if not entity.is_common:
        raise NotCommonEntity(f'{entity.local_name!r} is owned by a single party.')
    for kg in graphs:
        kg.properties[entity_id] = [SharedCell(RingValue(v)) for v in shared_row.party_share(kg.party)]
    return [kg.properties[entity_id] for kg in graphs]


def adjacency(kg, relation=None, direction='out', size=None):
    """Plaintext local 0/1 matrix; ``A[u][v] = 1`` for an edge u -> v (transposed for 'in')."""
    size = kg.size if size is None else size
    matrix = np.zeros((size, size), dtype=np.int64)
    for triple in kg.triples:
        if relation is None or triple.relation == relation:
            matrix[triple.head, triple.tail] = 1
    return matrix.T.copy() if direction == 'in' else matrix


def save_kg(kg, directory):
    """Write a party's merged store; :func:`load_saved_kg` reads it back bit-exact."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / 'entities.csv', 'w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle)
        writer.writerow(['global_id', 'local_name', 'key', 'owners'])
        for index, entity in enumerate(kg.entities):
            writer.writerow([index, entity.local_name, entity.key,
                             ';'.join(str(p) for p in sorted(entity.owner_parties))])
    with open(directory / 'triples.tsv', 'w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle, delimiter='\t')
        for triple in kg.triples:
            writer.writerow([triple.head, triple.relation, triple.tail])
    with open(directory / 'properties.csv', 'w', newline='', encoding='utf-8') as handle, \
            open(directory / 'shares.csv', 'w', newline='', encoding='utf-8') as shares:
        plain, shared = csv.writer(handle), csv.writer(shares)
        plain.writerow(['entity'] + [slot.name for slot in kg.schema])
        shared.writerow(['entity', 'slot', 'hexshare'])
        for entity_id in kg.own_entities():
            row = kg.properties[entity_id]
            if all(isinstance(cell, SharedCell) for cell in row):
                for slot, cell in enumerate(row, start=1):
                    shared.writerow([entity_id, slot, cell.share.hex()])
            else:
                plain.writerow([entity_id] + [repr(cell.value) if isinstance(cell.value, float) else cell.value
                                              for cell in row])


def load_saved_kg(directory, schema, party):
    directory = Path(directory)
    kg = KnowledgeGraph(party=party, schema=tuple(schema), merged=True)
    for number, row in _read_rows(directory / 'entities.csv')[1:]:
        owners = frozenset(int(p) for p in row[3].split(';') if p)
        kg.add_entity(Entity(row[1], row[2], global_id=int(row[0]), owner_parties=owners))
    for number, row in _read_rows(directory / 'triples.tsv', delimiter='\t'):
        kg.triples.append(Triple(int(row[0]), int(row[1]), int(row[2])))
    for number, row in _read_rows(directory / 'properties.csv')[1:]:
        kg.properties[int(row[0])] = [PlainCell(slot.parse(text)) for slot, text in zip(schema, row[1:])]
    for number, row in _read_rows(directory / 'shares.csv')[1:]:
        entity_id, slot = int(row[0]), int(row[1])
        cells = kg.properties.setdefault(entity_id, [None] * len(schema))
        if not 1 <= slot <= len(schema):
            raise ParseError(f'slot {slot} outside the schema', line=number, path=directory / 'shares.csv')
        cells[slot - 1] = SharedCell(RingValue.from_hex(row[2]))
    return kg
