"""Error hierarchy for the secure knowledge-graph toolkit."""


class SecureKgError(Exception):
    """Base class for every domain error raised by the toolkit."""


# Fixed-point and sharing
class OutOfRange(SecureKgError):
    pass


class InvalidPartyCount(SecureKgError):
    pass


class MissingShare(SecureKgError):
    pass


class DimensionMismatch(SecureKgError):
    pass


# Secure primitives
class TripleExhausted(SecureKgError):
    pass


class BadNormalization(SecureKgError):
    pass


class DivisorRange(SecureKgError):
    pass


class MagnitudeOverflow(SecureKgError):
    pass


class EmptyVector(SecureKgError):
    pass


# Runtime
class RoundDesync(SecureKgError):
    pass


class Deadlock(SecureKgError):
    pass


# Knowledge graphs and merging
class ParseError(SecureKgError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        location = ''
        if path is not None:
            location = f'{path}:'
        if line is not None:
            location += f'{line}:'
        super().__init__(f'{location} {message}' if location else message)


class UnknownEntity(SecureKgError):
    pass


class NotCommonEntity(SecureKgError):
    pass


class IncompatibleRule(SecureKgError):
    pass


# Query, embedding and completion
class UnknownRelation(SecureKgError):
    pass


class UnknownEntityName(SecureKgError):
    pass


class BadSlot(SecureKgError):
    pass


class IsolatedVertex(SecureKgError):
    pass


class EmptyCandidates(SecureKgError):
    pass


class AcceptanceFailure(SecureKgError):
    """A secure result disagreed with its plaintext oracle."""
