"""
Additive secret sharing over Z_{2^64} and the secure primitives built on it.

Shares are held in :class:`ShareVector` objects whose leading axis is the
party axis: row ``i`` is party ``i + 1``'s share. Every operation that needs
another party's data moves it through the :class:`~securekg.runtime.Runtime`,
so openings, rounds and bytes all land in the transcript.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from .dealer import split
from .exceptions import (
    BadNormalization, DimensionMismatch, DivisorRange, EmptyVector,
    InvalidPartyCount, MagnitudeOverflow, MissingShare,
)
from .numeric import (
    HALF_RING, RING_MASK, RingValue, as_ring, decode_array, encode, encode_array, to_signed,
)
from .runtime import Disclosure, pack, unpack

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Share:
    owner: int
    value: RingValue


class ShareVector:
    """Additive shares of an array; ``shares[i]`` is party ``i + 1``'s share."""

    __slots__ = ('shares',)

    def __init__(self, shares):
        shares = np.asarray(shares, dtype=np.uint64)
        if shares.ndim < 2:
            raise DimensionMismatch('Shares need a party axis and at least one value axis.')
        self.shares = shares

    @property
    def parties(self):
        return self.shares.shape[0]

    @property
    def shape(self):
        return self.shares.shape[1:]

    @property
    def size(self):
        return int(np.prod(self.shape, dtype=np.int64))

    def __len__(self):
        return self.shape[0]

    def __getitem__(self, key):
        if not isinstance(key, tuple):
            key = (key,)
        return wrap(self.shares[(slice(None),) + key])

    def party_share(self, party):
        return self.shares[party - 1]

    def shares_of(self, party):
        return [Share(party, RingValue(v)) for v in self.party_share(party).ravel()]

    def reshape(self, *shape):
        return wrap(self.shares.reshape((self.parties,) + tuple(shape)))

    def broadcast_to(self, shape):
        return wrap(np.broadcast_to(self.shares, (self.parties,) + tuple(shape)).copy())

    def copy(self):
        return wrap(self.shares.copy())

    @property
    def T(self):
        return wrap(np.swapaxes(self.shares, -1, -2))

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __neg__(self):
        return wrap(np.zeros_like(self.shares) - self.shares)

    def __repr__(self):
        return f'{type(self).__name__}(parties={self.parties}, shape={self.shape})'


class ShareMatrix(ShareVector):
    __slots__ = ()

    def __init__(self, shares):
        super().__init__(shares)
        if self.shares.ndim != 3:
            raise DimensionMismatch(f'A share matrix needs two value axes, got shape {self.shape}.')

    @property
    def rows(self):
        return self.shape[0]

    @property
    def cols(self):
        return self.shape[1]


def wrap(shares):
    shares = np.asarray(shares, dtype=np.uint64)
    return ShareMatrix(shares) if shares.ndim == 3 else ShareVector(shares)


def stack(items, axis=0):
    """Stack share arrays along a value axis."""
    return wrap(np.stack([item.shares for item in items], axis=axis + 1))


def concat(items, axis=0):
    return wrap(np.concatenate([item.shares for item in items], axis=axis + 1))


# Sharing and reconstruction

def share(x, parties, rng):
    """Split a ring value into ``parties`` additive shares."""
    if parties < 2:
        raise InvalidPartyCount(f'Need at least 2 parties, got {parties}.')
    rows = split(np.array([x.raw], dtype=np.uint64), parties, rng)
    return [Share(party, RingValue(rows[party - 1, 0])) for party in range(1, parties + 1)]


def reconstruct(shares, parties=None):
    owners = [s.owner for s in shares]
    expected = set(range(1, (parties or len(shares)) + 1))
    if len(owners) != len(set(owners)) or set(owners) != expected:
        missing = sorted(expected - set(owners))
        raise MissingShare(f'Need exactly one share per party; missing {missing}, got owners {owners}.')
    return RingValue(sum(s.value.raw for s in shares))


def share_array(raw, parties, rng):
    if parties < 2:
        raise InvalidPartyCount(f'Need at least 2 parties, got {parties}.')
    return wrap(split(raw, parties, rng))


def reconstruct_array(values):
    """Local sum of all rows; for oracles and debug checks, never a protocol step."""
    return values.shares.sum(axis=0, dtype=np.uint64)


def input_share(runtime, owner, raw, tag='input'):
    """The owner splits ``raw`` and sends one share to each other party."""
    raw = np.atleast_1d(np.asarray(raw, dtype=np.uint64))
    rows = split(raw, runtime.parties, runtime.rngs[owner])
    tag = runtime.fresh_tag(tag)
    received = np.empty_like(rows)
    received[owner - 1] = rows[owner - 1]
    for party in runtime.party_ids:
        if party != owner:
            runtime.post(owner, party, tag, pack(rows[party - 1]), Disclosure.INPUT)
    for party in runtime.party_ids:
        if party != owner:
            received[party - 1] = unpack(runtime.collect(party, owner, tag), raw.shape)
    runtime.barrier()
    return wrap(received)


def public_to_shared(runtime, raw):
    """Trivial sharing of a public value: party 1 holds it, everyone else zero."""
    raw = np.atleast_1d(np.asarray(raw, dtype=np.uint64))
    rows = np.zeros((runtime.parties,) + raw.shape, dtype=np.uint64)
    rows[0] = raw
    return wrap(rows)


def zeros(runtime, shape):
    return wrap(np.zeros((runtime.parties,) + tuple(shape), dtype=np.uint64))


def open_values(runtime, values, tag='open', disclosure=Disclosure.OUTPUT):
    opened = runtime.exchange(runtime.fresh_tag(tag), values.shares, disclosure)
    return opened[1]


def open_many(runtime, values, tag, disclosure=Disclosure.MASKED):
    opened = runtime.exchange_many(runtime.fresh_tag(tag), [v.shares for v in values], disclosure)
    return opened[1]


def reveal_to(runtime, values, party, tag='reveal'):
    opened = runtime.exchange(runtime.fresh_tag(tag), values.shares, Disclosure.OUTPUT, receivers=[party])
    return opened[party]


# Local linear operations

def _same_shape(a, b):
    if a.shares.shape != b.shares.shape:
        raise DimensionMismatch(f'Shapes {a.shape} and {b.shape} differ.')


def add(a, b):
    _same_shape(a, b)
    return wrap(a.shares + b.shares)


def sub(a, b):
    _same_shape(a, b)
    return wrap(a.shares - b.shares)


def add_public(a, raw):
    """Party 1 adds a public ring value (broadcast against the share shape)."""
    shares = a.shares.copy()
    shares[0] = shares[0] + np.broadcast_to(np.asarray(raw, dtype=np.uint64), a.shape)
    return wrap(shares)


def mul_int(a, k):
    """Multiply by public integers; exact, no truncation."""
    return wrap(a.shares * as_ring(np.asarray(k, dtype=np.int64)))


def sum_axis(a, axis):
    """Sum over a value axis; a single remaining value keeps a length-1 axis."""
    return wrap(a.shares.sum(axis=axis + 1 if axis >= 0 else axis, dtype=np.uint64, keepdims=a.shares.ndim == 2))


# Truncation

def truncate_shares(runtime, values, bits, tag='trunc'):
    """
    Divide shared values by 2^bits with at most one unit of error.

    Uses a dealer pair (r, r >> bits) with |r| < 2^62 and one masked opening;
    inputs must satisfy |x| < 2^62.
    """
    if bits <= 0:
        return values
    pair = runtime.dealer.truncation_pairs(values.shape, bits)
    r = runtime.deliver_material('trunc', pair[0])
    r_shift = runtime.deliver_material('trunc', pair[1])
    masked = open_many(runtime, [wrap(values.shares + r)], tag)[0]
    shifted = as_ring(to_signed(masked) >> np.int64(bits))
    shares = np.zeros_like(r_shift) - r_shift
    shares[0] = shares[0] + shifted
    return wrap(shares)


# Multiplication

def _beaver(runtime, a, b, tag):
    triple = runtime.dealer.triples(a.shape)
    ta, tb, tc = (runtime.deliver_material('triple', part) for part in triple)
    e, d = open_many(runtime, [wrap(a.shares - ta), wrap(b.shares - tb)], f'{tag}-open')
    z = tc + e * tb + d * ta
    z[0] = z[0] + e * d
    return wrap(z)


def mul(runtime, a, b, truncate=True, tag='mul'):
    """Beaver multiplication; fixed-point operands are truncated back by f bits."""
    _same_shape(a, b)
    if a.size == 0:
        return a.copy()
    product = _beaver(runtime, a, b, tag)
    if truncate:
        product = truncate_shares(runtime, product, runtime.config.frac_bits)
    return product


def _ring_op(op, left, right):
    return np.matmul(left, right) if op == 'matmul' else left * right


def cross_products(runtime, jobs, op, tag='cross'):
    """
    Two-party Beaver products of privately held operands, all in one round.

    Each job is ``(left_party, left_value, right_party, right_value)`` with raw
    uint64 plaintexts; returns, per job, the (left, right) shares of the raw
    product.
    """
    tag = runtime.fresh_tag(tag)
    prepared = []
    for index, (left_party, left, right_party, right) in enumerate(jobs):
        left = np.asarray(left, dtype=np.uint64)
        right = np.asarray(right, dtype=np.uint64)
        holders = (left_party, right_party)
        triple = runtime.dealer.matrix_triple(left.shape, right.shape, op=op, holders=holders)
        a, b, c = (runtime.deliver_material(f'{op}-triple', part, holders) for part in triple)
        job_tag = f'{tag}/{index}'
        left_e, left_d = left - a[0], np.zeros_like(b[0]) - b[0]
        right_e, right_d = np.zeros_like(a[1]) - a[1], right - b[1]
        runtime.send_pairwise(f'{job_tag}/e', left_party, right_party, left_e, right_e)
        runtime.send_pairwise(f'{job_tag}/d', left_party, right_party, left_d, right_d)
        prepared.append((job_tag, holders, left_e, left_d, right_e, right_d, a, b, c))

    results = []
    for job_tag, (left_party, right_party), left_e, left_d, right_e, right_d, a, b, c in prepared:
        e_at_left, e_at_right = runtime.receive_pairwise(
            f'{job_tag}/e', left_party, right_party, left_e.shape, right_e.shape)
        d_at_left, d_at_right = runtime.receive_pairwise(
            f'{job_tag}/d', left_party, right_party, left_d.shape, right_d.shape)
        e = left_e + e_at_left
        d = left_d + d_at_left
        left_share = c[0] + _ring_op(op, e, b[0]) + _ring_op(op, a[0], d) + _ring_op(op, e, d)
        right_share = c[1] + _ring_op(op, e, b[1]) + _ring_op(op, a[1], d)
        results.append((left_share, right_share))
    if jobs:
        runtime.barrier()
    return results


def matmul(runtime, x, w, truncate=True, tag='matmul'):
    """
    Shared matrix product via local and cross terms.

    Party ``i`` computes ``x_i @ w_i`` locally; each ordered pair ``i != j``
    runs one two-party Beaver product of ``x_i`` and ``w_j``.
    """
    if x.shape[-1] != w.shape[0]:
        raise DimensionMismatch(f'Cannot multiply {x.shape} by {w.shape}.')
    out = np.matmul(x.shares, w.shares)
    jobs = [(i, x.party_share(i), j, w.party_share(j))
            for i in runtime.party_ids for j in runtime.party_ids if i != j]
    for (i, _, j, _), (left, right) in zip(jobs, cross_products(runtime, jobs, 'matmul', tag)):
        out[i - 1] += left
        out[j - 1] += right
    result = wrap(out)
    if truncate:
        result = truncate_shares(runtime, result, runtime.config.frac_bits)
    return result


def private_matmul(runtime, owner, matrix, values, scaled=False, tag='private-matmul'):
    """
    Product of a matrix private to ``owner`` with shared values.

    ``matrix`` is raw ring content (integers for adjacency, encoded reals when
    ``scaled``). Other parties learn nothing about it beyond its shape.
    """
    matrix = as_ring(np.asarray(matrix))
    if matrix.shape[-1] != values.shape[0]:
        raise DimensionMismatch(f'Cannot multiply {matrix.shape} by {values.shape}.')
    out = np.zeros((runtime.parties,) + np.matmul(matrix, values.party_share(1)).shape, dtype=np.uint64)
    out[owner - 1] = np.matmul(matrix, values.party_share(owner))
    jobs = [(owner, matrix, q, values.party_share(q)) for q in runtime.party_ids if q != owner]
    for (_, _, q, _), (left, right) in zip(jobs, cross_products(runtime, jobs, 'matmul', tag)):
        out[owner - 1] += left
        out[q - 1] += right
    result = wrap(out)
    if scaled:
        result = truncate_shares(runtime, result, runtime.config.frac_bits)
    return result


def square(runtime, z, tag='square'):
    """
    Elementwise z^2 from local squares plus doubled cross terms over i < j.
    """
    out = z.shares * z.shares
    jobs = [(i, z.party_share(i), j, z.party_share(j))
            for i in runtime.party_ids for j in runtime.party_ids if i < j]
    for (i, _, j, _), (left, right) in zip(jobs, cross_products(runtime, jobs, 'mul', tag)):
        out[i - 1] += np.uint64(2) * left
        out[j - 1] += np.uint64(2) * right
    return truncate_shares(runtime, wrap(out), runtime.config.frac_bits)


# Linear combination and public scaling

def scale_bits(config, factor):
    """Extra precision bits used when multiplying by public reals."""
    peak = float(np.max(np.abs(factor))) if np.size(factor) else 0.0
    headroom = max(0, math.ceil(math.log2(peak))) if peak > 0 else 0
    return max(1, 62 - config.raw_bound.bit_length() - headroom)


def scale_public(runtime, values, factor, tag='scale'):
    """Multiply by public real factors (broadcast against the share shape)."""
    factor = np.asarray(factor, dtype=np.float64)
    if np.all(factor == np.rint(factor)):
        return mul_int(values, np.broadcast_to(factor.astype(np.int64), values.shape))
    bits = scale_bits(runtime.config, factor)
    k = np.broadcast_to(np.rint(factor * (1 << bits)).astype(np.int64), values.shape)
    return truncate_shares(runtime, mul_int(values, k), bits, tag)


def divide_public(runtime, values, divisor):
    return scale_public(runtime, values, 1.0 / np.asarray(divisor, dtype=np.float64))


def linear(runtime, alpha, a, b=None, beta=None):
    """alpha * a + b + beta for public alpha and beta."""
    if not isinstance(alpha, RingValue):
        alpha = encode(alpha, runtime.config)
    frac = runtime.config.frac_bits
    if alpha.signed % (1 << frac) == 0:
        result = mul_int(a, alpha.signed >> frac)
    else:
        result = truncate_shares(runtime, mul_int(a, alpha.signed), frac)
    if b is not None:
        result = add(result, b)
    if beta is not None:
        if not isinstance(beta, RingValue):
            beta = encode(beta, runtime.config)
        result = add_public(result, np.uint64(beta.raw))
    return result


# Comparison and selection

def secure_compare(runtime, a, b=None, tag='compare'):
    """
    Public bits ``a >= b`` (``b`` defaults to zero).

    Opens r * (a - b) for a dealer mask r in [1, 2^m]; only the sign is used.
    """
    diff = a if b is None else sub(a, b)
    bits = runtime.compare_bits
    if 2 * runtime.config.raw_bound * (1 << bits) >= HALF_RING:
        raise MagnitudeOverflow('Masked comparison could wrap the ring.')
    if diff.size == 0:
        return np.zeros(diff.shape, dtype=bool)
    masks = runtime.deliver_material('mask', runtime.dealer.compare_masks(diff.shape, bits))
    masked = _beaver(runtime, wrap(masks), diff, tag)
    opened = open_values(runtime, masked, f'{tag}-sign', Disclosure.COMPARISON)
    return to_signed(opened) >= 0


def compare_public(runtime, a, raw, tag='compare'):
    """Public bits ``a >= c`` for a public encoded constant ``c``."""
    raw = np.atleast_1d(np.asarray(raw, dtype=np.uint64))
    return secure_compare(runtime, add_public(a, np.zeros_like(raw) - raw), tag=tag)


def select(bits, a, b):
    """Local ``bits * a + (1 - bits) * b`` for public 0/1 bits."""
    _same_shape(a, b)
    c = as_ring(np.broadcast_to(np.asarray(bits, dtype=np.int64), a.shape))
    return wrap(b.shares + c * (a.shares - b.shares))


def maximum(runtime, a, b):
    return select(secure_compare(runtime, a, b), a, b)


def minimum(runtime, a, b):
    return select(secure_compare(runtime, b, a), a, b)


def _tournament(runtime, values, prefer_max):
    """Pairwise knockout along the last axis; ties keep the lower index."""
    if values.shape[-1] == 0:
        raise EmptyVector('Cannot take an extremum of an empty vector.')
    current = values.shares
    index = np.broadcast_to(np.arange(values.shape[-1]), values.shape).copy()
    while current.shape[-1] > 1:
        pairs = current.shape[-1] // 2
        left, right = wrap(current[..., 0:2 * pairs:2]), wrap(current[..., 1:2 * pairs:2])
        keep_left = secure_compare(runtime, left, right) if prefer_max else secure_compare(runtime, right, left)
        winners = select(keep_left, left, right).shares
        winner_index = np.where(keep_left, index[..., 0:2 * pairs:2], index[..., 1:2 * pairs:2])
        if current.shape[-1] % 2:
            winners = np.concatenate([winners, current[..., -1:]], axis=-1)
            winner_index = np.concatenate([winner_index, index[..., -1:]], axis=-1)
        current, index = winners, winner_index
    best = current[..., 0] if current.ndim > 2 else current[..., 0:1]
    return index[..., 0], wrap(best)


def argmax(runtime, values):
    """Public argmax (lowest index on ties) and the shared maximum along the last axis."""
    return _tournament(runtime, values, prefer_max=True)


def argmin(runtime, values):
    return _tournament(runtime, values, prefer_max=False)


# Division

def _check_divisor(runtime, b, exponent, tight):
    if not runtime.debug:
        return
    peek = decode_array(reconstruct_array(b), runtime.config)
    low = 2.0 ** (exponent - 1) if tight else 0.0
    high = 2.0 ** exponent
    bad = (peek < low) | (peek >= high) | (peek <= 0)
    if np.any(bad):
        raise BadNormalization(f'Divisor outside {"[" if tight else "("}{low}, {high}) at {np.flatnonzero(bad)[:5]}.')


def div(runtime, a, b, exponent, iterations=None, tight=True):
    """
    Shared a / b for b in [2^(e-1), 2^e) (``tight``) or (0, 2^e).

    Newton iteration on w ~ 2^e / b starting from 2.9142 - 2 b / 2^e.
    """
    _same_shape(a, b)
    config = runtime.config
    frac = config.frac_bits
    if not (-(frac - 2) <= exponent and 2.0 ** exponent <= config.magnitude_bound):
        raise DivisorRange(f'Exponent {exponent} outside the supported range.')
    _check_divisor(runtime, b, exponent, tight)
    if iterations is not None and iterations < 1:
        raise ValueError(f'Newton division needs at least one iteration, got {iterations}.')
    iterations = iterations or runtime.div_iterations
    if not tight:
        iterations = max(iterations, 2 * exponent + 4)

    def shift_down(values, bits):
        if bits > 0:
            return truncate_shares(runtime, values, bits)
        return mul_int(values, 1 << -bits)

    two = np.uint64(encode(2.0, config).raw)
    seed = np.uint64(encode(2.9142, config).raw)
    w = add_public(-shift_down(b, exponent - 1), seed)
    for _ in range(iterations):
        bw = shift_down(mul(runtime, b, w, truncate=False), frac + exponent)
        w = mul(runtime, w, add_public(-bw, two))
    return shift_down(mul(runtime, a, w, truncate=False), frac + exponent)


def encode_shared(runtime, values):
    """Public reals to trivially shared fixed point."""
    return public_to_shared(runtime, encode_array(values, runtime.config))


def decode_opened(runtime, raw):
    return decode_array(raw, runtime.config)


__all__ = [
    'Share', 'ShareVector', 'ShareMatrix', 'share', 'reconstruct', 'share_array',
    'reconstruct_array', 'input_share', 'public_to_shared', 'open_values', 'reveal_to',
    'linear', 'mul', 'matmul', 'private_matmul', 'square', 'scale_public', 'divide_public',
    'truncate_shares', 'secure_compare', 'compare_public', 'select', 'argmax', 'argmin',
    'maximum', 'minimum', 'div', 'RING_MASK',
]
