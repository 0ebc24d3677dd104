"""Exception types shared across the package."""


class PsytextError(Exception):
    """Base class for all package errors."""


class InstrumentError(PsytextError):
    """Raised when a measurement instrument fails validation.

    Carries the full list of violations so callers can report every
    problem at once instead of fixing them one by one.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(f"{v.location}: {v.message}" for v in self.violations)
        super().__init__(f"instrument is not usable: {lines}")


class ParseAmbiguityError(PsytextError):
    """A raw response matched two or more scale labels."""


class ParseFailure(PsytextError):
    """A raw response matched no scale label."""


class ProviderError(PsytextError):
    """Transport or protocol failure while talking to a rating provider."""


class ConvergenceError(PsytextError):
    """An iterative estimation routine exhausted its iteration budget."""


class InsufficientDataError(PsytextError):
    """Not enough complete observations for the requested computation."""


class ArtifactMissingError(PsytextError):
    """A pipeline stage requires an artifact an earlier stage has not written."""
