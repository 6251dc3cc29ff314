"""Exception types shared across the package.

The CLI maps these onto stable exit codes, so raise the most specific
type available rather than bare ValueError.
"""


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class ContractError(ValueError):
    """A documented precondition of an operation was violated."""


class ConfigError(ValueError):
    """Invalid configuration value or malformed config file."""


class DataFormatError(ValueError):
    """Corrupt or truncated binary container.

    ``offset`` is the byte position at which the problem was detected,
    when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class CompatibilityError(ValueError):
    """Checkpoint, config and dataset disagree on a structural field."""
