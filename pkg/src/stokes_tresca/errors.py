"""Exception types shared across the solver."""


class ConfigurationError(ValueError):
    """Invalid parameters or an ill-posed problem setup."""


class MeshError(ValueError):
    """A mesh violates one of its structural invariants."""


class MshParseError(MeshError):
    """A Gmsh file could not be read."""


class ConvergenceError(RuntimeError):
    """An iterative method hit its iteration cap.

    The partial result travels with the exception so callers can still
    write reports for a failed run.
    """

    def __init__(self, message, *, residual=None, report=None, state=None):
        super().__init__(message)
        self.residual = residual
        self.report = report
        self.state = state
