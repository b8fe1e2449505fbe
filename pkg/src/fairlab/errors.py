"""Exception types shared across fairlab modules."""


class FairlabError(Exception):
    """Base class for all fairlab errors."""


class SpecError(FairlabError, ValueError):
    """A generation, split, model, or training configuration is invalid."""


class CsvFormatError(FairlabError, ValueError):
    """A CSV file does not conform to the declared schema.

    Carries the 1-based data row number when the problem is row-local.
    """

    def __init__(self, message: str, row: int | None = None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class MissingSubgroupError(FairlabError, ValueError):
    """A positive-label subgroup (y=1, a=g) required by an operation is empty."""


class NonFiniteLossError(FairlabError, ArithmeticError):
    """Training produced a non-finite loss; carries the offending step index."""

    def __init__(self, step: int, value: float):
        super().__init__(f"non-finite loss {value!r} at step {step}")
        self.step = step
        self.value = value


class InfeasibleConstraintError(FairlabError, ValueError):
    """No threshold pair on the search grid satisfies the gap constraint."""


class InterpolationNotFoundError(FairlabError, LookupError):
    """No width in the sweep achieved train error within tolerance."""
