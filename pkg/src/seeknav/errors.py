"""Exception hierarchy shared by every module."""


class SeekError(Exception):
    """Base class for all package errors."""

    exit_code = 3


class InputError(SeekError, ValueError):
    """Malformed or schema-violating input document."""

    exit_code = 2


class GeometryError(SeekError, ValueError):
    exit_code = 2


class NoPathError(SeekError):
    pass


class StateError(SeekError, RuntimeError):
    pass


class NonConvergenceError(SeekError, RuntimeError):
    def __init__(self, residual, iterations):
        super().__init__(
            f"value iteration did not converge: residual {residual:.3e} "
            f"after {iterations} iterations"
        )
        self.residual = residual
        self.iterations = iterations


class SimulationError(SeekError, RuntimeError):
    """A command violated the simulator contract (e.g. stepping into a wall)."""


class InspectUnreachableError(SeekError):
    pass


class NoInstanceError(SeekError):
    pass
