"""
Completion heads on top of shared entity embeddings.

Property completion maps an embedding to a property row; triple scoring
rates a (head, tail) pair for a relation as ``sigma(sigma(h + t) W)``.
Ranking opens only the order of the candidates unless scores are asked for.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from . import mpc
from .embed import PolyActivation, activate, fit_sigmoid_poly, seeded_weights
from .exceptions import DimensionMismatch, EmptyCandidates
from .numeric import encode

logger = logging.getLogger(__name__)


@dataclass
class PropertyHead:
    weight: mpc.ShareMatrix
    activation: PolyActivation

    @property
    def dim(self):
        return self.weight.shape[0]

    @property
    def slots(self):
        return self.weight.shape[1]


@dataclass
class TripleScorer:
    weight: mpc.ShareMatrix
    activation: PolyActivation

    def __post_init__(self):
        if self.weight.shape[1] != 1:
            raise DimensionMismatch(f'Triple weights must be d x 1, got {self.weight.shape}.')

    @property
    def dim(self):
        return self.weight.shape[0]


@dataclass
class ScorerBank:
    """Triple scorers keyed by relation id, created on first use from a seed."""

    runtime: object
    dim: int
    seed: int
    activation: PolyActivation = None
    scorers: dict = field(default_factory=dict)

    def for_relation(self, relation):
        if relation not in self.scorers:
            activation = self.activation or fit_sigmoid_poly()
            weight = seeded_weights(self.runtime, self.dim, 1, self.seed + 1000 + int(relation))
            self.scorers[relation] = TripleScorer(weight, activation)
        return self.scorers[relation]


def build_property_head(runtime, dim, slots, seed, activation=None):
    weight = seeded_weights(runtime, dim, slots, seed + 500)
    return PropertyHead(weight, activation or fit_sigmoid_poly())


def _as_rows(h):
    return h.reshape(1, h.shape[0]) if len(h.shape) == 1 else h


def complete_property(runtime, h, head):
    """Shared property row(s) ``sigma(h W_pro)``."""
    rows = _as_rows(h)
    if rows.shape[1] != head.dim:
        raise DimensionMismatch(f'Embedding width {rows.shape[1]} does not match head width {head.dim}.')
    out = activate(runtime, mpc.matmul(runtime, rows, head.weight, tag='property-head'), head.activation)
    return out[0] if len(h.shape) == 1 else out


def score_candidates(runtime, h_head, h_tails, scorer):
    """Scores for one head against each row of ``h_tails``; a shared vector."""
    tails = _as_rows(h_tails)
    if h_head.shape[-1] != tails.shape[1] or tails.shape[1] != scorer.dim:
        raise DimensionMismatch(
            f'Embedding widths {h_head.shape[-1]} and {tails.shape[1]} do not match scorer width {scorer.dim}.')
    heads = mpc.wrap(np.broadcast_to(h_head.shares.reshape(runtime.parties, 1, -1), tails.shares.shape).copy())
    inner = activate(runtime, heads + tails, scorer.activation)
    outer = activate(runtime, mpc.matmul(runtime, inner, scorer.weight, tag='triple-head'), scorer.activation)
    return outer.reshape(tails.shape[0])


def score_triple(runtime, h_head, h_tail, scorer):
    if h_head.shape != h_tail.shape:
        raise DimensionMismatch(f'Embeddings {h_head.shape} and {h_tail.shape} differ.')
    return score_candidates(runtime, h_head, h_tail, scorer)


@dataclass
class Ranking:
    order: list
    scores: list = None


def rank_scores(runtime, scores, topk=None, open_scores=False):
    """
    Public top-k order of shared scores by repeated argmax.

    Each pick is knocked out by subtracting a public penalty at its index.
    Ties go to the lowest index.
    """
    count = scores.shape[0]
    if count == 0:
        raise EmptyCandidates('There are no candidates to rank.')
    topk = count if topk is None else max(1, min(topk, count))
    penalty = np.uint64(encode(-runtime.config.magnitude_bound / 4, runtime.config).raw)
    current = scores
    order = []
    for _ in range(topk):
        index, _ = mpc.argmax(runtime, current)
        pick = int(np.asarray(index).reshape(-1)[0])
        order.append(pick)
        knock = np.zeros(count, dtype=np.uint64)
        knock[pick] = penalty
        current = mpc.add_public(current, knock)
    opened = None
    if open_scores:
        values = mpc.decode_opened(runtime, mpc.open_values(runtime, scores, 'scores'))
        opened = [float(values[i]) for i in order]
    return Ranking(order, opened)


def rank_candidates(runtime, store, head_gid, candidates, scorer, topk=None, open_scores=False):
    """Rank candidate tails (global ids) for one head; returns ids in rank order."""
    candidates = list(candidates)
    if not candidates:
        raise EmptyCandidates(f'No candidate tails for entity {head_gid}.')
    scores = score_candidates(runtime, store.row(head_gid), store.final[np.asarray(candidates)], scorer)
    ranking = rank_scores(runtime, scores, topk, open_scores)
    ranking.order = [candidates[i] for i in ranking.order]
    logger.info('Ranked %d candidates for entity %d, kept %d', len(candidates), head_gid, len(ranking.order))
    return ranking
