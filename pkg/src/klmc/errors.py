"""Exception hierarchy. Everything derives from ``KlmcError`` (itself a ``ValueError``)."""


class KlmcError(ValueError):
    pass


class ConditionViolation(KlmcError):
    """A parameter-validity condition required by a calculator does not hold.

    ``reason`` is a short machine-readable tag (e.g. ``"condition_linear_violated"``).
    """

    def __init__(self, message: str, reason: str):
        super().__init__(message)
        self.reason = reason


class DegenerateStepError(KlmcError):
    pass


class PoisonedStateError(KlmcError):
    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class MomentOverflowError(KlmcError):
    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class NoStationaryLawError(KlmcError):
    pass
