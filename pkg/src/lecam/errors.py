"""Exception types shared across the package."""


class LeCamError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(LeCamError, ValueError):
    """Operands have incompatible shapes or live on different spaces."""


class ValidationError(LeCamError, ValueError):
    """A constructed object or input violates its invariants."""


class DominationError(LeCamError, ValueError):
    """A reference probability vector fails to dominate a component."""


class ConditionError(LeCamError, ValueError):
    """Per-cell mass domination fails, so the kernel construction is undefined.

    ``cell`` carries the key of the offending partition cell.
    """

    def __init__(self, message: str, cell=None):
        super().__init__(message)
        self.cell = cell


class CertificationError(LeCamError, RuntimeError):
    """A certified bound was violated.  Signals an implementation bug."""


class SolverError(LeCamError, RuntimeError):
    """The LP backend failed or its solution could not be certified."""


class ScenarioError(LeCamError, RuntimeError):
    """A scenario pipeline stage failed; the message names the stage."""
