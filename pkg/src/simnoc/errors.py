"""Exception types shared across the simulator."""


class ConfigError(ValueError):
    """Invalid configuration (bad parameter value or violated invariant)."""


class MappingError(ValueError):
    """Address map / routing table inconsistency."""


class ValidationError(ValueError):
    """Malformed or out-of-bounds input data (trace records, config files)."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SimulationError(RuntimeError):
    """Internal engine invariant breach. Indicates an engine bug, never bad user input."""


class MeasurementError(ValueError):
    """Metric requested over an empty or zero-length measurement window."""
