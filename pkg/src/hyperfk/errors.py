"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class HyperFKError(Exception):
    """Base class for every error raised by the library."""


class DomainError(HyperFKError, ValueError):
    """An argument lies outside the domain of an operation."""


class DomainExitError(DomainError):
    """A geodesic step left the coordinate box of a chart."""

    def __init__(self, message, boundary_point=None, step_index=None):
        super().__init__(message)
        self.boundary_point = boundary_point
        self.step_index = step_index


class NumericalError(HyperFKError, ArithmeticError):
    """An iterative or finite-difference computation failed."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ReachabilityError(DomainError):
    """A pinned endpoint is not on the lattice reachable in n steps."""

    def __init__(self, message, nearest=None):
        super().__init__(message)
        self.nearest = nearest


class EvaluationError(HyperFKError, ValueError):
    """A potential or observable evaluated to a non-finite value."""

    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


class DegenerateEstimateError(HyperFKError, RuntimeError):
    """No sample landed in the estimation bin."""


class TruncationError(HyperFKError, ArithmeticError):
    """A series truncation bound exceeds the requested tolerance."""


class ConfigurationError(HyperFKError, ValueError):
    """Inconsistent or insufficient configuration (grids, quadrature)."""


class AccuracyError(HyperFKError, ArithmeticError):
    """The requested tolerance could not be reached within budget."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class BudgetError(HyperFKError, MemoryError):
    """A set-theoretic construction exceeded its size budget."""


class NotNaturalError(HyperFKError, TypeError):
    """An operand of natural-number arithmetic is not a von Neumann natural."""


class ParseError(HyperFKError, ValueError):
    """Malformed brace notation."""

    def __init__(self, message, position):
        super().__init__(f"{message} at position {position}")
        self.position = position
