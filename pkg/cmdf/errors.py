"""
Exception hierarchy shared by every cmdf module.
"""


class CMDFError(Exception):
    """Base class for all errors raised by cmdf."""


class NumericalError(CMDFError):
    """An eigenvalue, SVD or inversion routine failed."""


class SingularityError(NumericalError):
    """A matrix that must be inverted is singular."""


class ConvergenceError(NumericalError):
    """An iterative solver hit its iteration cap or missed its residual target."""


class DivergenceError(ConvergenceError):
    """A Riccati iterate grew without bound."""


class InstabilityError(NumericalError):
    """A Lyapunov equation was posed with a matrix that is not Schur stable."""


class InvalidInputError(CMDFError, ValueError):
    """Shape, symmetry or definiteness requirements were violated."""


class GraphGenerationError(CMDFError):
    """No connected random geometric graph was found within the attempt cap."""


class DisconnectedGraphError(CMDFError):
    """The communication graph is not (strongly) connected."""


class UnobservableError(CMDFError):
    """The (modified) observation pair of a node is not observable."""

    def __init__(self, message, node=None, L=None):
        super().__init__(message)
        self.node = node
        self.L = L


class UsageError(CMDFError):
    """A filter operation was called in the wrong phase or with wrong shapes."""


class InsufficientDataError(CMDFError):
    """Too few usable points to fit an exponential rate."""


class ScenarioError(CMDFError):
    """A scenario file or built-in scenario name could not be resolved."""
