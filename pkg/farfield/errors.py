class RejectedInput(ValueError):
    """An argument violates the precondition of an operation."""


class RejectedConfiguration(ValueError):
    """An operator, grid or scheme combination that cannot be handled."""


class SolverNonConvergence(RuntimeError):
    def __init__(self, message: str, iterations: int, residual: float):
        super().__init__(f"{message} (iterations={iterations}, residual={residual:.3e})")
        self.iterations = iterations
        self.residual = residual


class ExtractionError(RuntimeError):
    """Extraction stopped without a profile; ``trace`` holds every completed step."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class DiagnosticFailure(RuntimeError):
    """A numerical certificate or constraint check failed."""

    def __init__(self, message: str, details: dict | None = None):
        super().__init__(message)
        self.details = details or {}


class InconclusiveResult(RuntimeError):
    """A limit or classification could not be decided on the available spheres."""

    def __init__(self, message: str, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class MissingBaseline(FileNotFoundError):
    pass
