"""Exception hierarchy shared by all heatsource modules."""


class HeatSourceError(Exception):
    """Base class for package errors."""


class DomainError(HeatSourceError, ValueError):
    """An argument lies outside the domain where the operation is defined."""


class NumericalError(HeatSourceError, ArithmeticError):
    """An iterative or direct numerical procedure failed."""


class DegenerateConfigurationError(HeatSourceError):
    """A least-squares system is rank deficient for the given configuration."""


class InversionError(HeatSourceError):
    """The reconstruction loop cannot proceed (e.g. no feasible stencil)."""


class MeshError(HeatSourceError, ValueError):
    """Invalid mesh geometry or topology."""


class OrientationError(MeshError):
    pass


class TopologyError(MeshError):
    pass


class ResourceError(HeatSourceError):
    """A request would exceed a configured resource cap."""


class ParseError(HeatSourceError, ValueError):
    """Malformed input file; carries the offending line/row where known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class AssemblyError(NumericalError, MeshError):
    """Finite element assembly met a degenerate element."""


class InfeasibleLocationError(DomainError):
    """A candidate source location is outside the admissible region."""
