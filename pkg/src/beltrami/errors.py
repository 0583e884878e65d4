"""Exception types raised across the package."""


class ContractViolation(ValueError):
    """Inputs do not satisfy an operation's precondition."""


class GeometryDegenerateError(ArithmeticError):
    """Tangents are (nearly) parallel or the Jacobian determinant is not positive."""


class UnsupportedConfiguration(ValueError):
    """The operation is only defined for a narrower class of inputs."""


class SolverFailure(RuntimeError):
    """An iterative solve did not reach its tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class CompatibilityError(ValueError):
    """A periodic Poisson source does not have zero mean."""


class DecompositionError(ValueError):
    """A boundary field is not conservative enough to split into gradient + constant."""


class StepSizeError(ValueError):
    """The perturbed map stops being a diffeomorphism within the requested steps."""


class StageError(RuntimeError):
    """Failure inside one stage of the potential pipeline."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
