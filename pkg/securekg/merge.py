"""
Private knowledge-graph merging.

Three steps, in order: PSI alignment of canonical keys between every pair of
parties, secure linking of the entities PSI left unmatched, and merging of
the property rows of every common entity under a per-slot policy. The result
is a :class:`MergedUniverse` in which common rows are held as shares by all
parties.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import mpc, psi
from .exceptions import IncompatibleRule, NotCommonEntity, UnknownEntityName
from .features import canonical_key, feature_matrix, trigrams
from .kgstore import (
    Entity, KnowledgeGraph, PlainCell, SharedCell, Triple, adjacency, encode_plain_row, to_shared,
)
from .numeric import encode, encode_array

logger = logging.getLogger(__name__)


class MatchKind(str, Enum):
    ALIGNED = 'aligned'
    LINKED = 'linked'


@dataclass
class AlignmentResult:
    parties: tuple
    kind: MatchKind
    common: list = field(default_factory=list)
    similarities: list = field(default_factory=list)
    transcript: object = field(default=None, compare=False, repr=False)

    def as_dict(self):
        return {
            'parties': list(self.parties),
            'kind': self.kind.value,
            'pairs': [list(pair) for pair in self.common],
            'similarities': [round(s, 6) for s in self.similarities],
        }


class MergeRule(str, Enum):
    MAX = 'max'
    MIN = 'min'
    AVERAGE = 'average'
    WEIGHTED_AVERAGE = 'weighted_average'
    MAJORITY = 'majority'


NUMERIC_RULES = frozenset({MergeRule.MAX, MergeRule.MIN, MergeRule.AVERAGE, MergeRule.WEIGHTED_AVERAGE})


@dataclass(frozen=True)
class SlotRule:
    rule: MergeRule
    weights: tuple = ()


@dataclass
class MergePolicy:
    """Per-slot merge rules; slots without a rule use average or majority."""

    rules: dict = field(default_factory=dict)

    @classmethod
    def from_config(cls, data):
        return cls({
            name: SlotRule(MergeRule(item['rule']), tuple(item.get('weights', ())))
            for name, item in (data or {}).items()
        })

    def rule_for(self, slot):
        if slot.name in self.rules:
            return self.rules[slot.name]
        return SlotRule(MergeRule.MAJORITY if slot.is_categorical else MergeRule.AVERAGE)

    def validate(self, schema):
        names = {slot.name for slot in schema}
        unknown = set(self.rules) - names
        if unknown:
            raise IncompatibleRule(f'Rules given for unknown slots {sorted(unknown)}.')
        for slot in schema:
            rule = self.rule_for(slot)
            if slot.is_categorical and rule.rule != MergeRule.MAJORITY:
                raise IncompatibleRule(f'Categorical slot {slot.name!r} needs majority, not {rule.rule.value}.')
            if not slot.is_categorical and rule.rule not in NUMERIC_RULES:
                raise IncompatibleRule(f'Numeric slot {slot.name!r} cannot use {rule.rule.value}.')
            if rule.rule == MergeRule.WEIGHTED_AVERAGE and abs(sum(rule.weights) - 1.0) > 1e-9:
                raise IncompatibleRule(f'Weights for {slot.name!r} must sum to 1.')

    def describe(self, schema):
        return {slot.name: self.rule_for(slot).rule.value for slot in schema}


# Alignment

def psi_align(keys_i, keys_j, seed=0, group='x25519', parties=(1, 2)):
    common, transcript = psi.intersect(keys_i, keys_j, seed=seed, group=group)
    return AlignmentResult(parties, MatchKind.ALIGNED, [(k, k) for k in sorted(common)],
                           transcript=transcript)


# Linking

@dataclass
class EntityFeatures:
    owner: int
    names: list
    values: mpc.ShareVector


def share_features(runtime, owner, names, dim=128):
    """The owner builds 0/1 trigram vectors locally and input-shares them."""
    names = list(names)
    raw = feature_matrix(names, dim).astype(np.uint64)
    if not names:
        return EntityFeatures(owner, names, mpc.zeros(runtime, (0, dim)))
    return EntityFeatures(owner, names, mpc.input_share(runtime, owner, raw, tag='features'))


def link_entities(runtime, targets, candidates, threshold=0.55):
    """
    Link each target to its most similar candidate when Jaccard >= threshold.

    Only the winning similarity per target is opened; each candidate is used
    at most once, strongest links first.
    """
    parties = (targets.owner, candidates.owner)
    result = AlignmentResult(parties, MatchKind.LINKED)
    if not targets.names or not candidates.names:
        return result

    config = runtime.config
    x, y = targets.values.shares, candidates.values.shares
    n, t_count, dim = x.shape
    c_count = y.shape[1]
    left = mpc.wrap(np.broadcast_to(x[:, :, None, :], (n, t_count, c_count, dim)).copy())
    right = mpc.wrap(np.broadcast_to(y[:, None, :, :], (n, t_count, c_count, dim)).copy())
    dots = mpc.sum_axis(mpc.mul(runtime, left, right, truncate=False, tag='link-dot'), -1)
    norms_x = mpc.sum_axis(targets.values, -1).shares
    norms_y = mpc.sum_axis(candidates.values, -1).shares
    union = mpc.wrap(norms_x[:, :, None] + norms_y[:, None, :]) - dots
    # empty targets have dot 0; their owner lifts the union to 1 locally
    empty = np.array([not trigrams(name) for name in targets.names], dtype=np.uint64)
    union.shares[targets.owner - 1] += empty[:, None]

    scale = config.scale
    exponent = int(dim).bit_length()
    similarity = mpc.div(runtime, mpc.mul_int(dots, scale), mpc.mul_int(union, scale), exponent, tight=False)
    winners, best = mpc.argmax(runtime, similarity)
    opened = mpc.decode_opened(runtime, mpc.open_values(runtime, best, 'link-winner'))

    taken = set()
    for target in sorted(range(t_count), key=lambda t: (-opened[t], t)):
        candidate = int(winners[target])
        if opened[target] >= threshold and candidate not in taken:
            taken.add(candidate)
            result.common.append((targets.names[target], candidates.names[candidate]))
            result.similarities.append(float(opened[target]))
    logger.info('Linking %d -> %d: %d of %d targets linked', *parties, len(result.common), t_count)
    return result


# Property merging

def encode_for_merge(cells, schema, config):
    """Fixed-point row with one-hot columns for categorical slots."""
    values = []
    for slot, cell in zip(schema, cells):
        if slot.is_categorical:
            onehot = np.zeros(slot.width)
            onehot[slot.category_index(cell.value)] = 1.0
            values.extend(onehot)
        else:
            values.append(float(cell.value))
    return encode_array(np.array(values), config)


def merge_properties(runtime, rows, schema, policy):
    """Merge one shared row per owner into a single shared row, slot by slot."""
    policy.validate(schema)
    count = len(rows)
    merged = []
    offset = 0
    for slot in schema:
        rule = policy.rule_for(slot)
        columns = mpc.wrap(np.stack([row.shares[:, offset:offset + slot.width] for row in rows], axis=1))
        offset += slot.width
        if rule.rule == MergeRule.MAJORITY:
            counts = mpc.sum_axis(columns, 0)
            index, _ = mpc.argmax(runtime, counts)
            merged.append(mpc.public_to_shared(runtime, encode(float(index), runtime.config).raw).shares)
            continue
        values = columns[:, 0]
        if rule.rule == MergeRule.AVERAGE:
            total = mpc.sum_axis(values, 0)
            value = total if count == 1 else mpc.divide_public(runtime, total, count)
        elif rule.rule == MergeRule.WEIGHTED_AVERAGE:
            if len(rule.weights) != count:
                raise IncompatibleRule(f'{slot.name!r} has {len(rule.weights)} weights for {count} rows.')
            value = mpc.zeros(runtime, (1,))
            for k, weight in enumerate(rule.weights):
                value = mpc.linear(runtime, weight, values[k:k + 1], value)
        elif rule.rule == MergeRule.MAX:
            _, value = mpc.argmax(runtime, values)
        else:
            _, value = mpc.argmin(runtime, values)
        merged.append(value.shares.reshape(runtime.parties, 1))
    return mpc.wrap(np.concatenate(merged, axis=1))


# Universe

class _UnionFind:
    def __init__(self):
        self.parent = {}

    def find(self, node):
        self.parent.setdefault(node, node)
        while self.parent[node] != node:
            self.parent[node] = self.parent[self.parent[node]]
            node = self.parent[node]
        return node

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


@dataclass
class MergedUniverse:
    entities: list
    graphs: list
    schema: tuple
    relations: object
    policy: MergePolicy = field(default_factory=MergePolicy)
    alignments: list = field(default_factory=list)
    members: dict = field(default_factory=dict)

    @property
    def size(self):
        return len(self.entities)

    @property
    def parties(self):
        return len(self.graphs)

    @property
    def names(self):
        return [entity.local_name for entity in self.entities]

    def entity_id(self, name):
        wanted = canonical_key(name)
        for gid, entity in enumerate(self.entities):
            if canonical_key(entity.local_name) == wanted or entity.key == wanted:
                return gid
        for gid, members in self.members.items():
            if any(canonical_key(local) == wanted for _, local in members):
                return gid
        raise UnknownEntityName(f'No entity named {name!r}.')

    def adjacency(self, party, relation=None, direction='out'):
        return adjacency(self.graphs[party - 1], relation, direction, size=self.size)

    def common_entities(self):
        return [gid for gid, entity in enumerate(self.entities) if entity.is_common]

    def shared_row(self, gid):
        if not self.entities[gid].is_common:
            raise NotCommonEntity(f'{self.entities[gid].local_name!r} is owned by a single party.')
        return mpc.wrap(np.array(
            [[cell.share.raw for cell in kg.properties[gid]] for kg in self.graphs], dtype=np.uint64))

    def _private_raw(self, kg, config):
        raw = np.zeros((self.size, len(self.schema)), dtype=np.uint64)
        for gid, cells in kg.properties.items():
            if cells and isinstance(cells[0], PlainCell):
                raw[gid] = encode_plain_row(cells, self.schema, config)
        return raw

    def feature_matrix(self, runtime):
        """Shared ``size x slots`` property matrix; owners input-share private rows."""
        total = mpc.zeros(runtime, (self.size, len(self.schema)))
        for kg in self.graphs:
            total = total + mpc.input_share(runtime, kg.party, self._private_raw(kg, runtime.config), 'properties')
        shares = total.shares.copy()
        for gid in self.common_entities():
            shares[:, gid, :] += self.shared_row(gid).shares
        return mpc.wrap(shares)

    def property_column(self, runtime, slot):
        return self.feature_matrix(runtime)[:, slot]

    def report(self):
        return {
            'matched': [a.as_dict() for a in self.alignments],
            'rules': self.policy.describe(self.schema),
            'global_ids': [
                {
                    'global_id': gid,
                    'name': entity.local_name,
                    'key': entity.key,
                    'owners': sorted(entity.owner_parties),
                    'members': [[party, local] for party, local in self.members.get(gid, [])],
                }
                for gid, entity in enumerate(self.entities)
            ],
            'common': [self.entities[gid].local_name for gid in self.common_entities()],
        }


def _display_name(members, keys):
    if len(members) == 1:
        return members[0][1]
    if len(set(keys)) == 1:
        return keys[0].title()
    return members[0][1]


def merge_kgs(runtime, kgs, policy, threshold=0.55, feature_dim=128, psi_group='x25519',
              relations=None, link=True):
    """Align, link and merge per-party graphs into one shared universe."""
    if len(kgs) < 2:
        from .exceptions import InvalidPartyCount
        raise InvalidPartyCount('Merging needs at least two graphs.')
    schema = kgs[0].schema
    policy.validate(schema)
    union = _UnionFind()
    alignments = []
    for kg in kgs:
        for index in range(kg.size):
            union.find((kg.party, index))

    matched = {kg.party: set() for kg in kgs}
    for a, kg_i in enumerate(kgs):
        for kg_j in kgs[a + 1:]:
            keys_i = {e.key: i for i, e in enumerate(kg_i.entities)}
            keys_j = {e.key: j for j, e in enumerate(kg_j.entities)}
            result = psi_align(set(keys_i), set(keys_j), seed=runtime.seed + 7919 * kg_i.party + kg_j.party,
                               group=psi_group, parties=(kg_i.party, kg_j.party))
            runtime.absorb(result.transcript)
            for key, _ in result.common:
                union.union((kg_i.party, keys_i[key]), (kg_j.party, keys_j[key]))
                matched[kg_i.party].add(keys_i[key])
                matched[kg_j.party].add(keys_j[key])
            result.common = [(kg_i.entities[keys_i[k]].local_name, kg_j.entities[keys_j[k]].local_name)
                             for k, _ in result.common]
            alignments.append(result)

    if link:
        for a, kg_i in enumerate(kgs):
            for kg_j in kgs[a + 1:]:
                targets = [i for i in range(kg_i.size) if i not in matched[kg_i.party]]
                candidates = [j for j in range(kg_j.size) if j not in matched[kg_j.party]]
                result = link_entities(
                    runtime,
                    share_features(runtime, kg_i.party, [kg_i.entities[i].local_name for i in targets], feature_dim),
                    share_features(runtime, kg_j.party, [kg_j.entities[j].local_name for j in candidates], feature_dim),
                    threshold,
                )
                for name_i, name_j in result.common:
                    union.union((kg_i.party, kg_i.entity_index(name_i)), (kg_j.party, kg_j.entity_index(name_j)))
                alignments.append(result)

    groups = {}
    for kg in kgs:
        for index in range(kg.size):
            groups.setdefault(union.find((kg.party, index)), []).append((kg.party, index))
    by_party = {kg.party: kg for kg in kgs}

    def group_key(members):
        return min((by_party[p].entities[i].key, p, i) for p, i in members)

    ordered = sorted(groups.values(), key=group_key)
    universe = []
    members = {}
    location = {}
    for gid, group in enumerate(ordered):
        group = sorted(group)
        keys = [by_party[p].entities[i].key for p, i in group]
        names = [(p, by_party[p].entities[i].local_name) for p, i in group]
        universe.append(Entity(_display_name(names, keys), group_key(group)[0], gid,
                               frozenset(p for p, _ in group)))
        members[gid] = names
        for node in group:
            location[node] = gid

    graphs = []
    for kg in kgs:
        merged = KnowledgeGraph(party=kg.party, schema=schema, entities=universe, merged=True)
        merged.triples = [Triple(location[(kg.party, t.head)], t.relation, location[(kg.party, t.tail)])
                          for t in kg.triples]
        for index, cells in kg.properties.items():
            gid = location[(kg.party, index)]
            if not universe[gid].is_common:
                merged.properties[gid] = list(cells)
        graphs.append(merged)

    for gid, entity in enumerate(universe):
        if not entity.is_common:
            continue
        rows = []
        for party, local in members[gid]:
            kg = by_party[party]
            raw = encode_for_merge(kg.properties[kg.entity_index(local)], schema, runtime.config)
            rows.append(mpc.input_share(runtime, party, raw, tag='merge-row'))
        to_shared(graphs, gid, merge_properties(runtime, rows, schema, policy))

    logger.info('Merged %d graphs into %d entities (%d common)',
                len(kgs), len(universe), sum(e.is_common for e in universe))
    return MergedUniverse(universe, graphs, schema, relations, policy, alignments, members)


__all__ = [
    'AlignmentResult', 'MatchKind', 'MergeRule', 'SlotRule', 'MergePolicy', 'EntityFeatures',
    'psi_align', 'share_features', 'link_entities', 'merge_properties', 'merge_kgs',
    'MergedUniverse', 'encode_for_merge', 'SharedCell',
]
