"""Exception types shared across the package."""


class LeciError(Exception):
    """Base class for all package errors."""


class ContractError(LeciError):
    """An operation was called outside its contract (bad shape, bad argument)."""


class ConfigError(LeciError):
    """A configuration value is invalid or unknown."""


class ValidationError(LeciError):
    """A data container violates one of its invariants.

    ``field`` names the offending field.
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class ParseError(LeciError):
    """A serialized file could not be parsed.  ``line`` is 1-based."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class NumericError(LeciError):
    """Training produced a non-finite loss.  Names the term and epoch."""

    def __init__(self, term: str, epoch: int):
        self.term = term
        self.epoch = epoch
        super().__init__(f"non-finite loss in term '{term}' at epoch {epoch}")
