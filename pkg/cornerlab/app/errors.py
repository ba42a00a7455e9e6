"""
Exception hierarchy for the corner-ladder laboratory.

Services raise the specific classes below. The command layer only needs the
two bases: ``ConfigurationError`` ends a run with exit status 2 and
``NumericalError`` with exit status 1.
"""


class ConfigurationError(Exception):
    """Custom exception for invalid experiment configurations"""
    pass


class NumericalError(Exception):
    """Base exception for every failure raised by a numerical service"""
    pass


class InvalidParameterError(NumericalError, ValueError):
    """Custom exception for parameters outside their admissible range"""
    pass


class DomainError(NumericalError, ValueError):
    """Custom exception for arguments outside a function's domain"""
    pass


class BracketError(NumericalError):
    """Custom exception for root brackets that fail to enclose a sign change"""
    pass


class ConvergenceError(NumericalError):
    """Custom exception for iterations that hit their cap"""
    pass


class BesselOverflowError(NumericalError, OverflowError):
    """Custom exception for Bessel values beyond floating-point range"""
    pass


class ResolutionError(NumericalError):
    """Custom exception for samplings too coarse for the requested quadrature"""
    pass


class SingularClosureError(NumericalError):
    """Custom exception for a vanishing Robin closure denominator"""
    pass


class PoleError(NumericalError):
    """Custom exception for evaluations at a pole of the resolvent"""
    pass


class GeometryError(NumericalError):
    """Custom exception for inconsistent profiles or matching radii"""
    pass


class StagnationError(NumericalError):
    """Custom exception for a surface touching the Bernoulli level"""
    pass


class MeshError(NumericalError):
    """Custom exception for degenerate or inconsistent triangulations"""
    pass


class AssemblyError(NumericalError):
    """Custom exception for failures while assembling system matrices"""
    pass


class SolverError(NumericalError):
    """Custom exception for eigensolver failures"""
    pass


class FitError(NumericalError):
    """Custom exception for ladder fits with insufficient data"""
    pass


class ResolutionWarning(UserWarning):
    """Warning for discretizations too coarse to separate ladder entries"""
    pass
