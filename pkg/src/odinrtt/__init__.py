"""Tamper-resistant indirect RTT estimation and latency-equalizing broadcast scheduling."""

from odinrtt.errors import (
    EmptySampleSet,
    InvalidAddress,
    InvalidTopology,
    NoReachableHop,
    OdinError,
    StrictExhausted,
    TransportUnavailable,
    UnknownAddress,
    UnknownTarget,
    ZeroActual,
)

__version__ = "0.1.0"

__all__ = [
    "EmptySampleSet",
    "InvalidAddress",
    "InvalidTopology",
    "NoReachableHop",
    "OdinError",
    "StrictExhausted",
    "TransportUnavailable",
    "UnknownAddress",
    "UnknownTarget",
    "ZeroActual",
]
