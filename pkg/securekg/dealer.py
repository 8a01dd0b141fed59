"""
Correlated randomness for the online phase.

The dealer hands out elementwise Beaver triples, two-party matrix triples,
comparison masks and truncation pairs. :class:`OnlineDealer` draws them from a
seeded generator and can record them; :class:`FileDealer` replays a recording
so that the online phase can be run against an offline-generated supply.
"""
import logging
from collections import Counter, deque
from pathlib import Path

import numpy as np

from .exceptions import InvalidPartyCount, ParseError, TripleExhausted
from .numeric import RING_MASK, as_ring

logger = logging.getLogger(__name__)

TRUNC_MASK_BITS = 62


def split(values, parties, rng):
    """Additive shares of a uint64 array; row ``i`` belongs to party ``i + 1``."""
    values = np.asarray(values, dtype=np.uint64)
    rows = rng.integers(0, RING_MASK, size=(parties - 1,) + values.shape,
                        dtype=np.uint64, endpoint=True)
    last = values - rows.sum(axis=0, dtype=np.uint64)
    return np.concatenate([rows, last[None]], axis=0)


def _ring_op(op, left, right):
    if op == 'matmul':
        return np.matmul(left, right)
    return left * right


def _shape_text(shape):
    return 'x'.join(str(d) for d in shape) or '-'


def _shape_parse(text):
    return () if text == '-' else tuple(int(d) for d in text.split('x'))


def _hex_join(array):
    return ','.join(f'{int(v):016x}' for v in np.asarray(array).ravel())


def _hex_split(text, shape):
    values = [int(v, 16) for v in text.split(',')] if text else []
    return np.array(values, dtype=np.uint64).reshape(shape)


class Dealer:
    """Common bookkeeping; subclasses provide the draws."""

    def __init__(self, parties, limit=None):
        if parties < 2:
            raise InvalidPartyCount(f'Need at least 2 parties, got {parties}.')
        self.parties = parties
        self.limit = limit
        self.issued = Counter()

    def _account(self, kind, count):
        self.issued[kind] += count
        if kind == 'triple' and self.limit is not None and self.issued[kind] > self.limit:
            raise TripleExhausted(f'Triple budget of {self.limit} exhausted.')

    def issue(self, kind, shape, **params):
        if kind == 'triple':
            return self.triples(shape)
        if kind == 'mask':
            return (self.compare_masks(shape, params.get('bits', 20)),)
        if kind == 'trunc':
            return self.truncation_pairs(shape, params['bits'])
        raise ValueError(f'Unknown dealer material {kind!r}.')


class OnlineDealer(Dealer):
    def __init__(self, parties, rng=None, limit=None, record=False):
        super().__init__(parties, limit)
        self.rng = rng if rng is not None else np.random.default_rng()
        self.record = record
        self._lines = {party: [] for party in range(1, parties + 1)}

    def _uniform(self, shape):
        return self.rng.integers(0, RING_MASK, size=shape, dtype=np.uint64, endpoint=True)

    def _log(self, party, line):
        if self.record:
            self._lines[party].append(line)

    def triples(self, shape):
        shape = tuple(shape)
        self._account('triple', int(np.prod(shape, dtype=np.int64)))
        a, b = self._uniform(shape), self._uniform(shape)
        shares = [split(value, self.parties, self.rng) for value in (a, b, a * b)]
        if self.record:
            for party in range(1, self.parties + 1):
                rows = [s[party - 1].ravel() for s in shares]
                for x, y, z in zip(*rows):
                    self._log(party, f'triple {int(x):016x} {int(y):016x} {int(z):016x}')
        return tuple(shares)

    def matrix_triple(self, left_shape, right_shape, op='matmul', holders=(1, 2)):
        left_shape, right_shape = tuple(left_shape), tuple(right_shape)
        self._account('matrix_triple', 1)
        a, b = self._uniform(left_shape), self._uniform(right_shape)
        shares = [split(value, 2, self.rng) for value in (a, b, _ring_op(op, a, b))]
        for index, party in enumerate(holders):
            self._log(party, ' '.join([
                'matrix', op, _shape_text(left_shape), _shape_text(right_shape),
                *(_hex_join(s[index]) for s in shares),
            ]))
        return tuple(shares)

    def compare_masks(self, shape, bits=20):
        shape = tuple(shape)
        self._account('mask', int(np.prod(shape, dtype=np.int64)))
        r = self.rng.integers(1, 1 << bits, size=shape, dtype=np.uint64, endpoint=True)
        shares = split(r, self.parties, self.rng)
        for party in range(1, self.parties + 1):
            for value in shares[party - 1].ravel():
                self._log(party, f'mask {int(value):016x}')
        return shares

    def truncation_pairs(self, shape, bits):
        shape = tuple(shape)
        self._account('trunc', int(np.prod(shape, dtype=np.int64)))
        bound = 1 << TRUNC_MASK_BITS
        r = self.rng.integers(-bound, bound, size=shape, dtype=np.int64)
        shares = [split(as_ring(r), self.parties, self.rng),
                  split(as_ring(r >> np.int64(bits)), self.parties, self.rng)]
        for party in range(1, self.parties + 1):
            for x, y in zip(shares[0][party - 1].ravel(), shares[1][party - 1].ravel()):
                self._log(party, f'trunc {bits} {int(x):016x} {int(y):016x}')
        return tuple(shares)

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for party, lines in self._lines.items():
            (directory / f'dealer_party{party}.txt').write_text('\n'.join(lines) + ('\n' if lines else ''))
        logger.info('Recorded dealer material for %d parties in %s', self.parties, directory)


class FileDealer(Dealer):
    """Replays material written by :meth:`OnlineDealer.save`."""

    def __init__(self, directory, parties, limit=None):
        super().__init__(parties, limit)
        self.directory = Path(directory)
        self._lines = {}
        for party in range(1, parties + 1):
            path = self.directory / f'dealer_party{party}.txt'
            if not path.exists():
                raise TripleExhausted(f'No dealer file for party {party} in {self.directory}.')
            self._lines[party] = deque(
                (number, line.split()) for number, line in enumerate(path.read_text().splitlines(), start=1)
                if line.strip()
            )

    def _next(self, party, kind):
        if not self._lines[party]:
            raise TripleExhausted(f'Dealer file for party {party} ran out of {kind} material.')
        number, fields = self._lines[party].popleft()
        if fields[0] != kind:
            raise ParseError(f'expected {kind!r} material, found {fields[0]!r}', line=number,
                             path=self.directory / f'dealer_party{party}.txt')
        return fields[1:]

    def triples(self, shape):
        shape = tuple(shape)
        count = int(np.prod(shape, dtype=np.int64))
        self._account('triple', count)
        out = np.zeros((3, self.parties, count), dtype=np.uint64)
        for party in range(1, self.parties + 1):
            for index in range(count):
                fields = self._next(party, 'triple')
                for slot in range(3):
                    out[slot, party - 1, index] = int(fields[slot], 16)
        return tuple(out[slot].reshape((self.parties,) + shape) for slot in range(3))

    def matrix_triple(self, left_shape, right_shape, op='matmul', holders=(1, 2)):
        self._account('matrix_triple', 1)
        rows = []
        for party in holders:
            fields = self._next(party, 'matrix')
            left, right = _shape_parse(fields[1]), _shape_parse(fields[2])
            if fields[0] != op or left != tuple(left_shape) or right != tuple(right_shape):
                raise ParseError(f'matrix triple shape mismatch for party {party}')
            out_shape = _ring_op(op, np.zeros(left, np.uint64), np.zeros(right, np.uint64)).shape
            rows.append((_hex_split(fields[3], left), _hex_split(fields[4], right),
                         _hex_split(fields[5], out_shape)))
        return tuple(np.stack([row[slot] for row in rows]) for slot in range(3))

    def compare_masks(self, shape, bits=20):
        shape = tuple(shape)
        count = int(np.prod(shape, dtype=np.int64))
        self._account('mask', count)
        out = np.zeros((self.parties, count), dtype=np.uint64)
        for party in range(1, self.parties + 1):
            for index in range(count):
                out[party - 1, index] = int(self._next(party, 'mask')[0], 16)
        return out.reshape((self.parties,) + shape)

    def truncation_pairs(self, shape, bits):
        shape = tuple(shape)
        count = int(np.prod(shape, dtype=np.int64))
        self._account('trunc', count)
        out = np.zeros((2, self.parties, count), dtype=np.uint64)
        for party in range(1, self.parties + 1):
            for index in range(count):
                fields = self._next(party, 'trunc')
                out[0, party - 1, index] = int(fields[1], 16)
                out[1, party - 1, index] = int(fields[2], 16)
        return tuple(out[slot].reshape((self.parties,) + shape) for slot in range(2))
