"""Exception types shared across the package.

Every failure mode is a distinct class so callers can react precisely;
nothing is ever silently truncated or approximated.
"""


class CCError(Exception):
    """Base class for all package errors."""


class MalformedDescriptor(CCError):
    """Ring descriptor is invalid (non-prime p, reducible modulus, bound < 2, ...)."""


class RingMismatch(CCError):
    """Operands belong to different coefficient rings."""


class NotAUnit(CCError):
    """An element required to be invertible is not."""


class InsufficientWindow(CCError):
    """An operation demanded coefficients outside the exactly-known region."""


class CharacteristicObstruction(CCError):
    """A division by an integer that is not invertible in the ring was demanded."""


class DomainViolation(CCError):
    """Argument lies outside the stated domain of the operation."""


class InvalidParameterChange(CCError):
    """Substitution parameters violate the valuation conditions."""


class UnboundedDemand(CCError):
    """A demand analysis cannot bound the required coefficient region."""


class StabilizationFailure(CCError):
    """Successive window enlargements did not reach agreement within budget."""


class PrecisionFailure(CCError):
    """An exact division by a prime power failed; the chosen lift precision is too small."""


class IndexMismatch(CCError):
    """Witt vector index sets are incompatible."""


class UnsupportedShape(CCError):
    """Input falls outside the supported class of the verification harness."""


class BadExponent(CCError):
    """An elementary factor was given the zero exponent pair."""


class ParseError(CCError):
    """Text input could not be parsed; carries a byte offset when available."""

    def __init__(self, message, offset=None):
        super().__init__(message if offset is None else f"{message} (at offset {offset})")
        self.offset = offset
