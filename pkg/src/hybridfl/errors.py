"""Exception hierarchy shared by the simulator modules."""


class HFLError(Exception):
    """Base class for all simulator errors."""


class ConfigError(HFLError, ValueError):
    """Invalid configuration value or constraint violation."""

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class ShapeError(HFLError, ValueError):
    """Array dimensions do not agree."""


class CodecError(HFLError, ValueError):
    """Payload cannot be encoded or decoded."""


class DetectionError(HFLError, ArithmeticError):
    """Zero-forcing detection is impossible for the given channel."""


class EmptyGroupError(HFLError):
    """Aggregation was asked to combine an empty set of uplink payloads."""


class ContractError(HFLError, ValueError):
    """Caller violated an operation's precondition."""


class FormatError(HFLError, ValueError):
    """On-disk data does not follow the expected binary layout."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class RoundError(HFLError):
    """Failure inside a federation round; carries the round index."""

    def __init__(self, round_index, cause):
        self.round_index = round_index
        self.cause = cause
        super().__init__(f"round {round_index}: {cause}")
