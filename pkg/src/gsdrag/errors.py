"""Exception types shared across the package."""


class GsDragError(Exception):
    """Base class for all errors raised by this package."""


class PlyParseError(GsDragError):
    """Malformed PLY header; the message names the offending line."""


class PlySchemaError(GsDragError):
    """PLY header parsed but the vertex layout is not the expected one."""


class DataError(GsDragError):
    """Non-finite or otherwise unusable numeric data in a scene."""


class ValidationError(GsDragError):
    """Invalid user input (drag spec, config, camera)."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class NoGaussiansCapturedError(GsDragError):
    """No Gaussian falls inside any handle sphere; the drag would be a no-op."""


class DegenerateDirectionError(GsDragError):
    """A zero-length vector was passed where a direction is required."""


class ContractError(GsDragError):
    """A call violated an operation precondition."""


class StaleStateError(GsDragError):
    """Edit state generation does not match the scene it is used with."""


class CorrectorError(GsDragError):
    """View corrector failed (unreachable, timeout, or protocol violation)."""


class HandleNotVisibleError(GsDragError):
    """No camera sees any editable Gaussian; view selection is impossible."""
