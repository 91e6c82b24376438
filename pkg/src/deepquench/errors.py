"""Exception hierarchy.

Input problems derive from :class:`InputError` (CLI exit code 1), solver
failures from :class:`NumericalError` (CLI exit code 2).
"""


class InputError(ValueError):
    """Invalid user input: bad shapes, out-of-domain arguments, bad config."""


class DomainError(InputError):
    """Argument outside the domain of a nonlinearity."""


class StructuralError(InputError):
    """Mismatched grids, lengths or shapes."""


class InfeasibleStateError(InputError):
    """Phase field outside [-1, 1] where feasibility is required."""


class ConfigError(InputError):
    """Configuration text that fails to parse or validate.

    ``problems`` holds every violation found, not just the first.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class SnapshotFormatError(InputError):
    """Malformed field snapshot bytes."""


class NumericalError(RuntimeError):
    """A numerical procedure failed to converge."""

    def __init__(self, message, residual=None, step=None):
        self.residual = residual
        self.step = step
        if step is not None:
            message = f"step {step}: {message}"
        if residual is not None:
            message = f"{message} (residual {residual:.3e})"
        super().__init__(message)


class NewtonError(NumericalError):
    pass


class SeparationError(NumericalError):
    """Newton cannot resolve the step without the separation clamp."""


class ActiveSetError(NumericalError):
    pass


class OptimizerError(NumericalError):
    def __init__(self, message, state=None, **kw):
        self.state = state
        super().__init__(message, **kw)
