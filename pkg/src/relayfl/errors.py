"""Exception types shared across the package."""


class RelayFLError(Exception):
    """Base class for all package errors."""


class ConfigError(RelayFLError):
    """Invalid or inconsistent configuration. Message names the offending field."""


class DomainError(RelayFLError, ValueError):
    """Argument outside the mathematical domain of a formula."""


class EmptyRegion(RelayFLError):
    """An overlap region contains no clients."""


class EmptyCell(RelayFLError):
    """Aggregation requested over an empty client set."""


class DoubleMerge(RelayFLError):
    """A relay client's local model was merged twice into one stream."""


class DivergenceError(RelayFLError):
    """Model entries became non-finite during training."""


class InfeasibleSchedule(RelayFLError):
    """A selected relay hop violates the round deadline (scheduler bug)."""


class TraceMismatch(RelayFLError):
    """Realized round behaviour disagrees with the scheduler's prediction."""


class SizeError(RelayFLError):
    """Problem instance exceeds an exact-method guard."""


class MissingTraces(RelayFLError):
    """Not enough trace files present for a comparison."""


class IOFailure(RelayFLError):
    """Output files could not be written."""
