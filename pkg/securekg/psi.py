"""
Diffie-Hellman style private set intersection.

Each party hashes its canonical keys into a prime-order group, raises them
to a secret exponent and sends them over; the peer raises them again.
Doubly masked values collide exactly for common keys, so both parties learn
the intersection and nothing else.

Two group families are available:

* ``x25519``: the prime-order subgroup of Curve25519. Keys hash onto the
  curve (never the twist) and the clamped X25519 scalar clears the cofactor,
  so every masked point lies in the order-l subgroup.
* ``ffdhe2048`` / ``ffdhe3072``: the quadratic-residue subgroup of the
  RFC 7919 safe primes p = 2q + 1. Keys hash to H(k)^2 mod p, so every
  element, masked or not, is a residue of order dividing q.
"""
import hashlib
import logging
from functools import lru_cache

from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey

from .exceptions import SecureKgError
from .runtime import Disclosure, run_protocol

logger = logging.getLogger(__name__)

FFDHE2048 = int(
    'FFFFFFFFFFFFFFFFADF85458A2BB4A9AAFDC5620273D3CF1D8B9C583CE2D3695'
    'A9E13641146433FBCC939DCE249B3EF97D2FE363630C75D8F681B202AEC4617A'
    'D3DF1ED5D5FD65612433F51F5F066ED0856365553DED1AF3B557135E7F57C935'
    '984F0C70E0E68B77E2A689DAF3EFE8721DF158A136ADE73530ACCA4F483A797A'
    'BC0AB182B324FB61D108A94BB2C8E3FBB96ADAB760D7F4681D4F42A3DE394DF4'
    'AE56EDE76372BB190B07A7C8EE0A6D709E02FCE1CDF7E2ECC03404CD28342F61'
    '9172FE9CE98583FF8E4F1232EEF28183C3FE3B1B4C6FAD733BB5FCBC2EC22005'
    'C58EF1837D1683B2C6F34A26C1B2EFFA886B423861285C97FFFFFFFFFFFFFFFF', 16)

FFDHE3072 = int(
    'FFFFFFFFFFFFFFFFADF85458A2BB4A9AAFDC5620273D3CF1D8B9C583CE2D3695'
    'A9E13641146433FBCC939DCE249B3EF97D2FE363630C75D8F681B202AEC4617A'
    'D3DF1ED5D5FD65612433F51F5F066ED0856365553DED1AF3B557135E7F57C935'
    '984F0C70E0E68B77E2A689DAF3EFE8721DF158A136ADE73530ACCA4F483A797A'
    'BC0AB182B324FB61D108A94BB2C8E3FBB96ADAB760D7F4681D4F42A3DE394DF4'
    'AE56EDE76372BB190B07A7C8EE0A6D709E02FCE1CDF7E2ECC03404CD28342F61'
    '9172FE9CE98583FF8E4F1232EEF28183C3FE3B1B4C6FAD733BB5FCBC2EC22005'
    'C58EF1837D1683B2C6F34A26C1B2EFFA886B4238611FCFDCDE355B3B6519035B'
    'BC34F4DEF99C023861B46FC9D6E6C9077AD91D2691F7F7EE598CB0FAC186D91C'
    'AEFE130985139270B4130C93BC437944F4FD4452E2D74DD364F2E21E71F54BFF'
    '5CAE82AB9C9DF69EE86D2BC522363A0DABC521979B0DEADA1DBF9A42D5C4484E'
    '0ABCD06BFA53DDEF3C1B20EE3FD59D7C25E41D2B66C62E37FFFFFFFFFFFFFFFF', 16)


def _digest_int(key, counter, bits):
    value = 0
    block = 0
    while value.bit_length() < bits + 64:
        data = f'{counter}|{block}|{key}'.encode()
        value = (value << 512) | int.from_bytes(hashlib.sha512(data).digest(), 'big')
        block += 1
    return value


class Curve25519Group:
    """Order-l subgroup of Curve25519 through the X25519 function."""
    prime = (1 << 255) - 19
    coefficient = 486662
    width = 32

    def __init__(self, name='x25519'):
        self.name = name

    def on_curve(self, u):
        rhs = (u * u * u + self.coefficient * u * u + u) % self.prime
        return rhs != 0 and pow(rhs, (self.prime - 1) // 2, self.prime) == 1

    def hash(self, key):
        counter = 0
        while True:
            u = _digest_int(key, counter, self.prime.bit_length()) % self.prime
            if self.on_curve(u):
                return u.to_bytes(self.width, 'little')
            counter += 1

    def secret(self, rng):
        return X25519PrivateKey.from_private_bytes(rng.bytes(self.width))

    def power(self, element, secret):
        return secret.exchange(X25519PublicKey.from_public_bytes(element))

    def contains(self, element):
        return self.on_curve(int.from_bytes(element, 'little'))


class SafePrimeGroup:
    """Quadratic residues modulo a safe prime p = 2q + 1, a group of prime order q."""

    def __init__(self, name, prime):
        self.name = name
        self.prime = prime
        self.order = (prime - 1) // 2
        self.width = (prime.bit_length() + 7) // 8

    def hash(self, key):
        counter = 0
        while True:
            root = _digest_int(key, counter, self.prime.bit_length()) % self.prime
            if root not in (0, 1, self.prime - 1):
                return pow(root, 2, self.prime).to_bytes(self.width, 'big')
            counter += 1

    def secret(self, rng):
        return int.from_bytes(rng.bytes(self.width), 'big') % (self.order - 1) + 1

    def power(self, element, secret):
        return pow(int.from_bytes(element, 'big'), secret, self.prime).to_bytes(self.width, 'big')

    def contains(self, element):
        value = int.from_bytes(element, 'big')
        return 1 < value < self.prime and pow(value, self.order, self.prime) == 1


GROUPS = {
    'x25519': Curve25519Group(),
    'ffdhe2048': SafePrimeGroup('ffdhe2048', FFDHE2048),
    'ffdhe3072': SafePrimeGroup('ffdhe3072', FFDHE3072),
}


def group_params(name):
    try:
        return GROUPS[name]
    except KeyError:
        raise ValueError(f'Unknown PSI group {name!r}; choose from {sorted(GROUPS)}.') from None


@lru_cache(maxsize=65536)
def hash_to_group(key, group='x25519'):
    return group_params(group).hash(key)


def _pack(elements):
    return b''.join(elements)


def _unpack(payload, width):
    return [payload[i:i + width] for i in range(0, len(payload), width)]


def psi_party(keys, peer, group='x25519'):
    """Party state machine for one side of the two-round PSI."""
    params = group_params(group)

    def machine(ctx):
        secret = params.secret(ctx.rng)
        ordered = sorted(keys)
        order = [ordered[i] for i in ctx.rng.permutation(len(ordered))]
        masked = [params.power(hash_to_group(k, group), secret) for k in order]
        inbox = yield [ctx.message(peer, 'psi-masked', _pack(masked), Disclosure.PSI)]
        doubled = [params.power(v, secret) for v in _unpack(inbox[0].payload, params.width)]
        inbox = yield [ctx.message(peer, 'psi-double', _pack(doubled), Disclosure.PSI)]
        mine_doubled = _unpack(inbox[0].payload, params.width)
        theirs_doubled = set(doubled)
        return {key for key, value in zip(order, mine_doubled) if value in theirs_doubled}

    return machine


def intersect(keys_i, keys_j, seed=0, group='x25519'):
    """Run both sides; returns (intersection, transcript)."""
    outputs, transcript = run_protocol(
        {1: psi_party(set(keys_i), 2, group), 2: psi_party(set(keys_j), 1, group)}, seed=seed)
    if outputs[1] != outputs[2]:
        raise SecureKgError('PSI parties disagree on the intersection.')
    logger.debug('PSI of %d and %d keys found %d common', len(keys_i), len(keys_j), len(outputs[1]))
    return outputs[1], transcript
