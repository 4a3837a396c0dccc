"""Exception types shared across the engine."""


class QuriousError(Exception):
    """Base class for all engine errors."""


class FormatError(QuriousError):
    """Malformed input: bad magic/version, unparseable record, duplicate id."""


class DataError(QuriousError):
    """Structurally valid input carrying unusable values (NaN/Inf, truncation)."""


class TransportError(QuriousError):
    """HTTP request to an embedding service failed with a definitive error."""


class RetryableError(TransportError):
    """Transient transport failure that persisted through all retry attempts."""


class ContractError(QuriousError):
    """Remote service answered but violated the wire contract (e.g. wrong dim)."""


class NoPositivesError(QuriousError):
    """A calibration criterion needed positive labels and none were present."""
