"""
Fixed-point reals embedded in the ring Z_{2^64}.

A real ``x`` is stored as the two's-complement residue of ``round(x * 2^f)``.
Scalars use :class:`RingValue`; protocol code works on ``numpy.uint64``
arrays, whose arithmetic wraps modulo 2^64.
"""
import math
from dataclasses import dataclass

import numpy as np
from django.core.exceptions import ImproperlyConfigured

from .exceptions import OutOfRange

RING_BITS = 64
RING_MODULUS = 1 << RING_BITS
RING_MASK = RING_MODULUS - 1
HALF_RING = 1 << (RING_BITS - 1)


@dataclass(frozen=True)
class FixedPointConfig:
    total_bits: int = RING_BITS
    frac_bits: int = 16
    magnitude_bound: float = float(2 ** 20)

    def __post_init__(self):
        if self.total_bits != RING_BITS:
            raise ImproperlyConfigured('Only the 64-bit ring is supported.')
        if not 0 < self.frac_bits < self.total_bits - 1:
            raise ImproperlyConfigured(f'frac_bits must lie in (0, {self.total_bits - 1}).')
        if self.magnitude_bound <= 0:
            raise ImproperlyConfigured('magnitude_bound must be positive.')
        if self.magnitude_bound * self.scale >= HALF_RING:
            raise ImproperlyConfigured('magnitude_bound * 2^frac_bits must stay below 2^63.')

    @property
    def scale(self):
        return 1 << self.frac_bits

    @property
    def raw_bound(self):
        """Largest admissible |raw| for an encoded value."""
        return int(self.magnitude_bound * self.scale)

    @property
    def ulp(self):
        return 1.0 / self.scale


DEFAULT_CONFIG = FixedPointConfig()


@dataclass(frozen=True, order=True)
class RingValue:
    raw: int

    def __post_init__(self):
        object.__setattr__(self, 'raw', int(self.raw) & RING_MASK)

    @property
    def signed(self):
        return self.raw - RING_MODULUS if self.raw >= HALF_RING else self.raw

    def _coerce(self, other):
        if isinstance(other, RingValue):
            return other.raw
        if isinstance(other, (int, np.integer)):
            return int(other)
        return NotImplemented

    def __add__(self, other):
        value = self._coerce(other)
        if value is NotImplemented:
            return value
        return RingValue(self.raw + value)

    __radd__ = __add__

    def __sub__(self, other):
        value = self._coerce(other)
        if value is NotImplemented:
            return value
        return RingValue(self.raw - value)

    def __rsub__(self, other):
        value = self._coerce(other)
        if value is NotImplemented:
            return value
        return RingValue(value - self.raw)

    def __neg__(self):
        return RingValue(-self.raw)

    def __mul__(self, other):
        """Raw ring product; fixed-point callers truncate afterwards."""
        value = self._coerce(other)
        if value is NotImplemented:
            return value
        return RingValue(self.raw * value)

    __rmul__ = __mul__

    def hex(self):
        return f'{self.raw:016x}'

    @classmethod
    def from_hex(cls, text):
        return cls(int(text, 16))

    def to_bytes(self):
        return self.raw.to_bytes(8, 'little')

    def __repr__(self):
        return f'RingValue(0x{self.hex()})'


def _check_range(values, config):
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise OutOfRange('Cannot encode a non-finite value.')
    worst = float(np.max(np.abs(values))) if values.size else 0.0
    if worst > config.magnitude_bound:
        raise OutOfRange(f'|{worst}| exceeds the magnitude bound {config.magnitude_bound}.')
    return values


def encode(x, config=DEFAULT_CONFIG):
    """Encode a real as a RingValue at ``config.frac_bits`` fractional bits."""
    _check_range([x], config)
    return RingValue(round(x * config.scale))


def decode(value, config=DEFAULT_CONFIG):
    return value.signed / config.scale


def truncate_raw(signed, bits):
    """Round-half-up arithmetic shift of a signed integer."""
    if bits <= 0:
        return signed
    return (signed + (1 << (bits - 1))) >> bits


def ring_mul_truncate(a, b, config=DEFAULT_CONFIG):
    """Plaintext fixed-point product; error at most one ulp."""
    product = truncate_raw(a.signed * b.signed, config.frac_bits)
    if abs(product) > config.raw_bound:
        raise OutOfRange('Fixed-point product exceeds the magnitude bound.')
    return RingValue(product)


# Array helpers

def as_ring(values):
    """Two's-complement residues of signed integers as a uint64 array."""
    values = np.asarray(values)
    if values.dtype == np.uint64:
        return values
    if values.dtype == object:
        return np.array([int(v) & RING_MASK for v in values.ravel()], dtype=np.uint64).reshape(values.shape)
    return np.ascontiguousarray(values.astype(np.int64)).view(np.uint64)


def to_signed(raw):
    return np.ascontiguousarray(np.asarray(raw, dtype=np.uint64)).view(np.int64)


def encode_array(values, config=DEFAULT_CONFIG):
    values = _check_range(values, config)
    return as_ring(np.rint(values * config.scale).astype(np.int64))


def decode_array(raw, config=DEFAULT_CONFIG):
    return to_signed(raw).astype(np.float64) / config.scale


def truncate_array(raw, bits):
    """Plaintext round-half-up truncation of encoded values by ``bits``."""
    signed = to_signed(raw)
    if bits <= 0:
        return as_ring(signed)
    return as_ring((signed + np.int64(1 << (bits - 1))) >> np.int64(bits))


def ring_constant(value):
    return np.uint64(int(value) & RING_MASK)


def to_hex(raw):
    return [f'{int(v):016x}' for v in np.asarray(raw, dtype=np.uint64).ravel()]


def from_hex(texts):
    return np.array([int(t, 16) for t in texts], dtype=np.uint64)


def exponent_for(bound):
    """Smallest e with bound < 2^e."""
    return max(1, math.floor(math.log2(bound)) + 1) if bound >= 1 else 1
