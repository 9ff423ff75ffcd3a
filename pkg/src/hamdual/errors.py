"""Exception types shared across the package."""


class HamdualError(Exception):
    pass


class NonConvergence(HamdualError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class InvalidHamiltonian(HamdualError):
    """A sampled structural check on H failed; ``check`` names it."""

    def __init__(self, check, message, point=None):
        super().__init__(f"{check}: {message}")
        self.check = check
        self.point = point


class H3Violation(HamdualError):
    def __init__(self, point, message="(H3) inequality fails"):
        super().__init__(f"{message} at (u, v) = {tuple(point)}")
        self.point = tuple(point)


class MeshMismatch(HamdualError):
    pass


class BadExponent(HamdualError):
    pass


class TooManyModes(HamdualError):
    pass


class BadSpec(HamdualError):
    pass


class NonPositive(HamdualError):
    pass


class RegimeMismatch(HamdualError):
    pass


class ScheduleFailure(HamdualError):
    pass


class DeformationStall(HamdualError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class LevelOutOfBracket(HamdualError):
    def __init__(self, message, outcome=None):
        super().__init__(message)
        self.outcome = outcome


class BracketFailure(HamdualError):
    pass


class BoundaryMaximum(HamdualError):
    pass


class MissingRun(HamdualError):
    pass


class ConfigError(HamdualError):
    pass
