"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration value (bad range, bad weights, unknown key)."""


class DagValidationError(ValueError):
    """Precedence graph references unknown tasks or is otherwise malformed."""


class SimulationError(RuntimeError):
    """Simulation preconditions violated (missing assignment, non-ready dispatch)."""


class InstanceTooLargeError(ValueError):
    """Exhaustive search refused: the enumeration would exceed the size guard."""


class TrainingError(RuntimeError):
    """Policy training failed (divergence or non-finite gradients)."""
