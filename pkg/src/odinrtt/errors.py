"""Exception hierarchy shared by every subsystem."""


class OdinError(Exception):
    """Base class for all errors raised by this package."""


class TransportUnavailable(OdinError):
    """The probe transport cannot send packets (missing privileges, closed socket)."""


class InvalidAddress(OdinError, ValueError):
    pass


class NoReachableHop(OdinError):
    """Every hop of a trace timed out, so no estimate can be produced."""


class StrictExhausted(OdinError):
    """Strict mode ran out of retries without a neighbor answering."""

    def __init__(self, message, attempts=None):
        super().__init__(message)
        self.attempts = attempts or []


class InvalidTopology(OdinError, ValueError):
    pass


class UnknownAddress(OdinError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class UnknownTarget(OdinError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class ZeroActual(OdinError, ZeroDivisionError):
    pass


class EmptySampleSet(OdinError):
    """An evaluation run produced no successful sample."""
