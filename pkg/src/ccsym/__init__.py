"""Exact Contou-Carrere symbols, Witt symbols, and reciprocity checks."""

from .errors import (
    BadExponent,
    CCError,
    CharacteristicObstruction,
    DomainViolation,
    IndexMismatch,
    InsufficientWindow,
    InvalidParameterChange,
    MalformedDescriptor,
    NotAUnit,
    ParseError,
    PrecisionFailure,
    RingMismatch,
    StabilizationFailure,
    UnboundedDemand,
    UnsupportedShape,
)
from .rings import (
    FiniteField,
    FiniteFieldDesc,
    IntegersModDesc,
    IntegersModPK,
    NilpotentExtension,
    NilpotentExtensionDesc,
    PrimeField,
    PrimeFieldDesc,
    Rationals,
    RationalsDesc,
    Ring,
    RingValue,
    default_modulus,
    field_part,
    make_ring,
    norm_to_subfield,
    with_field,
)

__all__ = [n for n in dir() if not n.startswith("_")]
