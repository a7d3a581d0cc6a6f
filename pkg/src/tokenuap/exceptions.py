class InvalidInputError(ValueError):
    """An argument violates a documented precondition."""


class DegenerateVectorError(InvalidInputError):
    """A zero-norm vector was given where a direction is required."""


class ParseError(ValueError):
    """Malformed input file."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class TrainingError(RuntimeError):
    """Optimization diverged (non-finite loss or parameters)."""


class GenerationSkipped(Exception):
    """No replaceable token in the example; no adversarial sample produced."""


class FormatError(ValueError):
    """A checkpoint or perturbation container is unreadable or inconsistent."""
