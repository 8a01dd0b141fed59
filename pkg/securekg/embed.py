"""
Secure GraphSAGE-style entity embeddings over a merged universe.

Initial embeddings are ``sigma(x W)`` with a degree-2 polynomial ``sigma``;
each layer aggregates neighbour embeddings (mean or element-wise max),
concatenates them with the vertex's own embedding and applies
``sigma(. W^k)``. Only the forward pass and a squared-error loss are
provided.
"""
import csv
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from . import mpc
from .exceptions import DimensionMismatch, IsolatedVertex
from .numeric import as_ring, encode, encode_array

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PolyActivation:
    q0: float
    q1: float
    q2: float = 0.0

    def __call__(self, z):
        return self.q0 + self.q1 * z + self.q2 * np.square(z)

    def raw(self, config):
        return tuple(encode(q, config) for q in (self.q0, self.q1, self.q2))


def fit_sigmoid_poly(bound=4.0, degree=2, points=1001):
    """Least-squares polynomial fit of the logistic sigmoid on [-bound, bound]."""
    if bound <= 0:
        raise ValueError('The fitting range must be positive.')
    if degree not in (1, 2):
        raise ValueError('Only degree 1 and 2 activations are supported.')
    grid = np.linspace(-bound, bound, points)
    coeffs = np.polyfit(grid, 1.0 / (1.0 + np.exp(-grid)), degree)[::-1]
    q = [0.0, 0.0, 0.0]
    for power, value in enumerate(coeffs):
        # odd symmetry of sigmoid - 1/2 leaves only rounding noise here
        q[power] = 0.0 if power == 2 and abs(value) < 1e-9 else float(value)
    return PolyActivation(*q)


def fit_residual(activation, bound=4.0, points=1001):
    grid = np.linspace(-bound, bound, points)
    return float(np.max(np.abs(1.0 / (1.0 + np.exp(-grid)) - activation(grid))))


class Aggregator(str, Enum):
    MEAN = 'mean'
    POOLING = 'pooling'


@dataclass
class GnnConfig:
    depth: int
    dim: int
    aggregator: Aggregator
    input_weight: mpc.ShareMatrix
    layer_weights: list
    activation: PolyActivation
    secret_divisor: bool = False
    isolated: str = 'zero'

    def __post_init__(self):
        self.aggregator = Aggregator(self.aggregator)
        if self.depth < 1:
            raise ValueError('depth must be at least 1')
        if len(self.layer_weights) != self.depth:
            raise DimensionMismatch(f'{len(self.layer_weights)} layer weights for depth {self.depth}.')
        if self.input_weight.shape[1] != self.dim:
            raise DimensionMismatch(f'Input weight has {self.input_weight.shape[1]} columns, not {self.dim}.')
        for weight in self.layer_weights:
            if weight.shape != (2 * self.dim, self.dim):
                raise DimensionMismatch(f'Layer weight {weight.shape} is not {(2 * self.dim, self.dim)}.')


@dataclass
class EmbeddingStore:
    names: list
    layers: list = field(default_factory=list)
    relation_embeddings: mpc.ShareMatrix = None

    @property
    def final(self):
        return self.layers[-1]

    def row(self, gid):
        return self.final[gid]

    def export_shares(self, directory):
        """One CSV per party: ``entity,dim,hexshare``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for party in range(1, self.final.parties + 1):
            with open(directory / f'embeddings_party{party}.csv', 'w', newline='') as handle:
                writer = csv.writer(handle)
                writer.writerow(['entity', 'dim', 'hexshare'])
                for gid, row in enumerate(self.final.party_share(party)):
                    for dim, value in enumerate(row):
                        writer.writerow([self.names[gid], dim, f'{int(value):016x}'])


def seeded_weights(runtime, rows, cols, seed, owner=1):
    """Uniform(-0.1, 0.1) weights drawn by ``owner`` from a seed and input-shared."""
    plain = np.random.default_rng(seed).uniform(-0.1, 0.1, size=(rows, cols))
    return mpc.input_share(runtime, owner, encode_array(plain, runtime.config), tag='weights')


def activate(runtime, z, activation):
    """q0 + q1 z + q2 z^2 on shares, with q0 split evenly across parties."""
    q0, q1, q2 = activation.raw(runtime.config)
    z2 = mpc.square(runtime, z)
    h = mpc.linear(runtime, q2, z2, mpc.linear(runtime, q1, z))
    base = q0.signed // runtime.parties
    offsets = np.full(runtime.parties, base, dtype=np.int64)
    offsets[0] += q0.signed - base * runtime.parties
    shares = h.shares + as_ring(offsets).reshape((runtime.parties,) + (1,) * len(h.shape))
    return mpc.wrap(shares)


def secure_init_embeddings(runtime, x, w, activation):
    """sigma(x W): cross-term matrix product, shared square, local polynomial."""
    return activate(runtime, mpc.matmul(runtime, x, w, tag='init-matmul'), activation)


def neighbourhoods(universe):
    """Per-party undirected 0/1 neighbour matrices over global ids."""
    matrices = []
    for party in range(1, universe.parties + 1):
        edges = universe.adjacency(party)
        both = np.minimum(edges + edges.T, 1)
        np.fill_diagonal(both, 0)
        matrices.append(both)
    return matrices


def aggregate_mean(runtime, h, neighbours, secret_divisor=False, isolated='zero'):
    size, dim = h.shape
    total = mpc.zeros(runtime, (size, dim))
    for party, local in enumerate(neighbours, start=1):
        total = total + mpc.private_matmul(runtime, party, local, h, tag='mean-sum')
    degree = np.sum(neighbours, axis=0).sum(axis=1)
    runtime.declare_public('degree', degree)
    if np.any(degree == 0) and isolated == 'error':
        raise IsolatedVertex(f'Vertices {np.flatnonzero(degree == 0).tolist()} have no neighbours.')

    if not secret_divisor:
        factor = np.where(degree > 0, 1.0 / np.maximum(degree, 1), 0.0)[:, None]
        return mpc.scale_public(runtime, total, factor, tag='mean-scale')

    result = np.zeros_like(total.shares)
    for value in sorted(set(degree.tolist()) - {0}):
        rows = np.flatnonzero(degree == value)
        exponent = int(value).bit_length()
        divisor = mpc.public_to_shared(runtime, encode_array(np.full((len(rows), dim), float(value)), runtime.config))
        quotient = mpc.div(runtime, total[rows], divisor, exponent)
        result[:, rows] = quotient.shares
    return mpc.wrap(result)


def aggregate_pool(runtime, h, neighbours):
    size, dim = h.shape
    result = np.zeros((runtime.parties, size, dim), dtype=np.uint64)
    lists = [np.concatenate([np.flatnonzero(local[v]) for local in neighbours]) for v in range(size)]
    groups = {}
    for v, members in enumerate(lists):
        if len(members):
            groups.setdefault(len(members), []).append(v)
    for count, vertices in sorted(groups.items()):
        gathered = np.stack([h.shares[:, lists[v]] for v in vertices], axis=1)
        _, best = mpc.argmax(runtime, mpc.wrap(np.swapaxes(gathered, -1, -2)))
        result[:, vertices] = best.shares.reshape(runtime.parties, len(vertices), dim)
    return mpc.wrap(result)


def secure_propagate(runtime, store, cfg, universe):
    """Run ``cfg.depth`` aggregation layers on top of ``store.layers[0]``."""
    neighbours = neighbourhoods(universe)
    h = store.layers[-1]
    for k, weight in enumerate(cfg.layer_weights, start=1):
        if cfg.aggregator == Aggregator.MEAN:
            aggregated = aggregate_mean(runtime, h, neighbours, cfg.secret_divisor, cfg.isolated)
        else:
            aggregated = aggregate_pool(runtime, h, neighbours)
        h = secure_init_embeddings(runtime, mpc.concat([h, aggregated], axis=1), weight, cfg.activation)
        store.layers.append(h)
        logger.info('Layer %d of %d done (%s)', k, cfg.depth, cfg.aggregator.value)
    return h


def secure_loss(runtime, predicted, target):
    """Shared sum of squared differences."""
    diff = mpc.sub(predicted, target)
    flat = diff.reshape(diff.size)
    return mpc.sum_axis(mpc.mul(runtime, flat, flat, tag='loss'), 0)


def build_gnn(runtime, features, depth, dim, aggregator, seed, activation=None, secret_divisor=False):
    activation = activation or fit_sigmoid_poly()
    input_weight = seeded_weights(runtime, features, dim, seed)
    layer_weights = [seeded_weights(runtime, 2 * dim, dim, seed + k) for k in range(1, depth + 1)]
    return GnnConfig(depth, dim, Aggregator(aggregator), input_weight, layer_weights, activation, secret_divisor)


def embed_universe(runtime, universe, depth=2, dim=4, aggregator='mean', seed=0, activation=None,
                   secret_divisor=False):
    """Full forward pass; returns (store, config, shared input features)."""
    x = universe.feature_matrix(runtime)
    cfg = build_gnn(runtime, x.shape[1], depth, dim, aggregator, seed, activation, secret_divisor)
    store = EmbeddingStore(universe.names)
    store.layers.append(secure_init_embeddings(runtime, x, cfg.input_weight, cfg.activation))
    relations = max([t.relation for kg in universe.graphs for t in kg.triples], default=0)
    store.relation_embeddings = mpc.zeros(runtime, (relations + 1, dim))
    secure_propagate(runtime, store, cfg, universe)
    return store, cfg, x
