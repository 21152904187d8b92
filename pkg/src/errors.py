"""Exception hierarchy for the planning pipeline and the CLI exit codes it maps to"""


class PdvgError(Exception):
    """Base class for every error raised by the package."""

    exit_code = 1


class ConfigError(PdvgError):
    """Scenario document is malformed or violates an invariant."""

    exit_code = 2

    def __init__(self, message, field_path=None):
        self.field_path = field_path
        if field_path:
            message = f"{field_path}: {message}"
        super().__init__(message)


class ValidationError(PdvgError, ValueError):
    """Inputs have the wrong shape or violate a precondition."""

    exit_code = 2


class NumericalError(PdvgError, ArithmeticError):
    exit_code = 4


class DomainError(PdvgError, ValueError):
    """Argument outside the mathematical domain of a function."""

    exit_code = 4


class DegenerateGeometryError(NumericalError):
    """Radar/aircraft geometry where the detection model is singular."""


class InfeasibleError(PdvgError):
    exit_code = 3


class InfeasibleRadiusError(InfeasibleError):
    """No detection radius exists for the requested probability."""


class InfeasibleSmoothingError(InfeasibleError):
    """A turn fillet does not fit on the legs adjacent to a waypoint."""

    def __init__(self, message, waypoint_index):
        self.waypoint_index = waypoint_index
        super().__init__(f"waypoint {waypoint_index}: {message}")


class InfeasibleEndpointError(InfeasibleError):
    """Start or goal lies inside a radar polygon."""

    def __init__(self, message, radar):
        self.radar = radar
        super().__init__(f"radar {radar}: {message}")


class NoPathError(InfeasibleError):
    """Goal is unreachable in the visibility graph."""
