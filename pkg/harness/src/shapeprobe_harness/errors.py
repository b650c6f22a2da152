class HarnessError(Exception):
    """Base for all harness failures."""


class SpecError(HarnessError):
    """Malformed or inconsistent training spec."""


class DataError(HarnessError):
    """Dataset directory disagrees with its manifest, or dims mismatch."""


class GuardError(HarnessError):
    """Prediction code attempted to read ground-truth masks."""
