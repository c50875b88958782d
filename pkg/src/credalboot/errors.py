"""Exception types shared across the package."""


class CredalbootError(Exception):
    """Base class for all package-specific failures."""


class DegenerateCovarianceError(CredalbootError):
    """A covariance matrix stayed non positive definite after the one-shot floor."""


class PosteriorUndefinedError(CredalbootError):
    """Every component density underflowed at some point."""


class EmptyClusterError(CredalbootError):
    """A responsibility column collapsed to (numerically) zero mass."""


class FitFailedError(CredalbootError):
    """All EM restarts aborted; carries per-restart diagnostics."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])


class BootstrapReplicateError(CredalbootError):
    """A bootstrap replicate exhausted its redraw budget without a successful fit."""

    def __init__(self, message, replicate):
        super().__init__(message)
        self.replicate = replicate


class SolverStalledError(CredalbootError):
    """The active-set QP solver hit its iteration budget; carries the last residual."""

    def __init__(self, message, kkt_residual):
        super().__init__(message)
        self.kkt_residual = kkt_residual


class SimulationError(CredalbootError):
    """A pipeline stage failed while processing one simulated dataset."""

    def __init__(self, message, dataset):
        super().__init__(message)
        self.dataset = dataset


class ParseError(CredalbootError):
    """Tabular input could not be parsed; message carries the 1-based line number."""
