"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class HobnError(Exception):
    """Base class for every error raised by the library."""


class ParseError(HobnError):
    def __init__(self, message: str, line: int = 0, column: int = 0) -> None:
        self.line = line
        self.column = column
        where = f"{line}:{column}: " if line else ""
        super().__init__(f"{where}{message}")


class InferenceError(HobnError):
    """No type derivation exists for the term (or it could not be built)."""


class FuelExhausted(HobnError):
    def __init__(self, fuel: int, trace: object = None) -> None:
        self.fuel = fuel
        self.trace = trace
        super().__init__(f"reduction did not terminate within {fuel} steps")


class ZeroEvidence(HobnError):
    """The observed data has probability zero under the model."""


class DomainMismatch(HobnError):
    """Two factors disagree on the observation status of a shared name."""


class UnknownName(HobnError):
    pass


class CompatibilityViolation(HobnError):
    """Premises of a rule share a name that is internal to one of them."""


class WellFormednessViolation(HobnError):
    pass
