"""Exception hierarchy.

Everything raised on bad *input* derives from :class:`RhoticaError`, so the CLI
can map it to the validation exit code. Plain ``OSError`` is left for I/O.
"""

from __future__ import annotations


class RhoticaError(ValueError):
    pass


class ParseError(RhoticaError):
    """Malformed input text; ``locus`` names the line or field that failed."""

    def __init__(self, message: str, locus: str | None = None):
        self.locus = locus
        super().__init__(f"{locus}: {message}" if locus else message)


class ValidationError(RhoticaError):
    """One or more invariant violations, collected before raising."""

    def __init__(self, problems: list[str] | str):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class DuplicateSymbolError(ParseError):
    pass


class DegenerateInputError(RhoticaError):
    pass


class NumericalInstabilityError(RhoticaError):
    pass


class ConvergenceError(RhoticaError):
    pass


class InsufficientDataError(RhoticaError):
    pass
