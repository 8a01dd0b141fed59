"""
Plaintext oracles for every secure operation.

Fixed-point oracles work on raw ring arrays and follow the same truncation
schedule as the shared code, so results agree to within a few ulps. Float
references evaluate the same equations in double precision. Graph oracles
run on the union of the parties' plaintext graphs.
"""
import numpy as np

from .embed import Aggregator, neighbourhoods
from .kgstore import PlainCell, encode_plain_row
from .merge import MergeRule
from .mpc import scale_bits
from .numeric import as_ring, encode, encode_array, to_signed, truncate_array
from .query import Op, parse_program, resolve_slot, slot_constant


# Fixed-point arithmetic

def fx_mul(a, b, config):
    return truncate_array(np.asarray(a, dtype=np.uint64) * np.asarray(b, dtype=np.uint64), config.frac_bits)


def fx_matmul(x, w, config):
    """Ring matrix product then one truncation, as the shared product does."""
    return truncate_array(np.matmul(np.asarray(x, dtype=np.uint64), np.asarray(w, dtype=np.uint64)),
                          config.frac_bits)


def fx_linear(alpha, raw, config):
    alpha = encode(alpha, config) if not hasattr(alpha, 'signed') else alpha
    frac = config.frac_bits
    if alpha.signed % (1 << frac) == 0:
        return raw * as_ring(np.int64(alpha.signed >> frac))
    return truncate_array(raw * as_ring(np.int64(alpha.signed)), frac)


def fx_activate(z, activation, config):
    q0, q1, q2 = activation.raw(config)
    z = np.asarray(z, dtype=np.uint64)
    return fx_linear(q2, fx_mul(z, z, config), config) + fx_linear(q1, z, config) + np.uint64(q0.raw)


def fx_scale_public(raw, factor, config):
    factor = np.asarray(factor, dtype=np.float64)
    if np.all(factor == np.rint(factor)):
        return raw * as_ring(np.broadcast_to(factor.astype(np.int64), raw.shape))
    bits = scale_bits(config, factor)
    k = as_ring(np.broadcast_to(np.rint(factor * (1 << bits)).astype(np.int64), raw.shape))
    return truncate_array(raw * k, bits)


def plain_weights(rows, cols, seed, config):
    """The raw matrix :func:`securekg.embed.seeded_weights` shares."""
    return encode_array(np.random.default_rng(seed).uniform(-0.1, 0.1, size=(rows, cols)), config)


# Property data

def pooled_properties(universe, config):
    """Raw ``size x slots`` matrix: owners' plaintext rows plus summed shares of common rows."""
    raw = np.zeros((universe.size, len(universe.schema)), dtype=np.uint64)
    for kg in universe.graphs:
        for gid, cells in kg.properties.items():
            if cells and isinstance(cells[0], PlainCell):
                raw[gid] = encode_plain_row(cells, universe.schema, config)
            else:
                raw[gid] += np.array([cell.share.raw for cell in cells], dtype=np.uint64)
    return raw


def plain_merge(values, schema, policy):
    """Merged plaintext row for one common entity from each owner's plain values."""
    merged = []
    for index, slot in enumerate(schema):
        rule = policy.rule_for(slot)
        column = [row[index] for row in values]
        if rule.rule == MergeRule.MAJORITY:
            counts = [sum(1 for v in column if v == category) for category in slot.categories]
            merged.append(slot.categories[int(np.argmax(counts))])
            continue
        numbers = np.array([float(v) for v in column])
        if rule.rule == MergeRule.AVERAGE:
            merged.append(float(numbers.mean()))
        elif rule.rule == MergeRule.WEIGHTED_AVERAGE:
            merged.append(float(np.dot(rule.weights, numbers)))
        elif rule.rule == MergeRule.MAX:
            merged.append(float(numbers.max()))
        else:
            merged.append(float(numbers.min()))
    return merged


# Query

def union_adjacency(universe, relation=None):
    return sum(universe.adjacency(p, relation) for p in range(1, universe.parties + 1))


def plain_query(program, universe, config):
    """Union-graph evaluation of a query program; returns a set of names."""
    if isinstance(program, str):
        program = parse_program(program)
    properties = None
    locations = None
    for instruction in program:
        if instruction.op == Op.START:
            if instruction.target == '*':
                locations = np.ones(universe.size, dtype=bool)
            else:
                locations = np.zeros(universe.size, dtype=bool)
                locations[universe.entity_id(instruction.target)] = True
        elif instruction.op in (Op.OUT, Op.IN):
            edges = union_adjacency(universe, universe.relations.resolve(instruction.relation))
            step = edges.T if instruction.op == Op.OUT else edges
            locations = (step @ locations.astype(np.int64)) >= 1
        else:
            if properties is None:
                properties = to_signed(pooled_properties(universe, config))
            index, slot = resolve_slot(universe, instruction.slot)
            threshold = encode(slot_constant(slot, instruction.value), config).signed
            column = properties[:, index]
            if instruction.cmp == '>=':
                keep = column >= threshold
            elif instruction.cmp == '<':
                keep = column < threshold
            else:
                keep = column == threshold
            locations = locations & keep
    return {universe.names[gid] for gid in np.flatnonzero(locations)}


def plain_reachable(adjacency, source, target, depth):
    """True when ``target`` is reachable from ``source`` in 1..depth steps."""
    frontier = np.zeros(adjacency.shape[0], dtype=bool)
    frontier[source] = True
    for _ in range(depth):
        frontier = (adjacency.T @ frontier.astype(np.int64)) >= 1
        if frontier[target]:
            return True
    return False


# Embeddings

def _neighbour_lists(neighbours, size):
    return [np.concatenate([np.flatnonzero(local[v]) for local in neighbours]) for v in range(size)]


def fx_mean(h, neighbours, config):
    total = np.zeros_like(h)
    for local in neighbours:
        total = total + np.matmul(as_ring(local), h)
    degree = np.sum(neighbours, axis=0).sum(axis=1)
    factor = np.where(degree > 0, 1.0 / np.maximum(degree, 1), 0.0)[:, None]
    return fx_scale_public(total, factor, config)


def fx_pool(h, neighbours):
    signed = to_signed(h)
    out = np.zeros_like(signed)
    for v, members in enumerate(_neighbour_lists(neighbours, h.shape[0])):
        if len(members):
            out[v] = signed[members].max(axis=0)
    return as_ring(out)


def fx_gnn(x, input_weight, layer_weights, activation, neighbours, aggregator, config):
    """Fixed-point forward pass; returns every layer's raw embeddings."""
    h = fx_activate(fx_matmul(x, input_weight, config), activation, config)
    layers = [h]
    for weight in layer_weights:
        if Aggregator(aggregator) == Aggregator.MEAN:
            aggregated = fx_mean(h, neighbours, config)
        else:
            aggregated = fx_pool(h, neighbours)
        h = fx_activate(fx_matmul(np.concatenate([h, aggregated], axis=1), weight, config), activation, config)
        layers.append(h)
    return layers


def float_gnn(x, input_weight, layer_weights, activation, neighbours, aggregator):
    """Double-precision reference; also returns the largest pre-activation seen."""
    z = x @ input_weight
    peak = float(np.max(np.abs(z))) if z.size else 0.0
    h = activation(z)
    lists = _neighbour_lists(neighbours, x.shape[0])
    for weight in layer_weights:
        aggregated = np.zeros_like(h)
        for v, members in enumerate(lists):
            if len(members):
                block = h[members]
                aggregated[v] = block.mean(axis=0) if Aggregator(aggregator) == Aggregator.MEAN else block.max(axis=0)
        z = np.concatenate([h, aggregated], axis=1) @ weight
        peak = max(peak, float(np.max(np.abs(z))) if z.size else 0.0)
        h = activation(z)
    return h, peak


def universe_gnn(universe, depth, dim, aggregator, seed, activation, config):
    """Fixed-point oracle for :func:`securekg.embed.embed_universe` with the same seeds."""
    x = pooled_properties(universe, config)
    input_weight = plain_weights(x.shape[1], dim, seed, config)
    layer_weights = [plain_weights(2 * dim, dim, seed + k, config) for k in range(1, depth + 1)]
    return fx_gnn(x, input_weight, layer_weights, activation, neighbourhoods(universe), aggregator, config)


# Completion

def fx_property(h, weight, activation, config):
    return fx_activate(fx_matmul(np.atleast_2d(h), weight, config), activation, config)


def fx_scores(h_head, h_tails, weight, activation, config):
    tails = np.atleast_2d(np.asarray(h_tails, dtype=np.uint64))
    inner = fx_activate(tails + np.asarray(h_head, dtype=np.uint64)[None, :], activation, config)
    return fx_activate(fx_matmul(inner, weight, config), activation, config).reshape(-1)


def plain_rank(scores, topk=None):
    """Indices by descending score, lowest index first on ties."""
    scores = np.asarray(scores)
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return order if topk is None else order[:topk]
