"""Exception hierarchy shared by all lqg_adapt modules."""


class LqgAdaptError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(LqgAdaptError, ValueError):
    pass


class NonConvergence(LqgAdaptError):
    pass


class SingularInnerBlock(LqgAdaptError):
    pass


class InvalidNoise(LqgAdaptError, ValueError):
    pass


class UnstableArgument(LqgAdaptError, ValueError):
    pass


class NotPSD(LqgAdaptError, ValueError):
    pass


class AssumptionViolated(LqgAdaptError):
    """Raised when a true system fails the stability/controllability/observability checks.

    ``failed`` lists the names of the checks that did not hold.
    """

    def __init__(self, failed):
        self.failed = list(failed)
        super().__init__("system assumptions violated: " + ", ".join(self.failed))


class NonFiniteInput(LqgAdaptError, ValueError):
    pass


class Diverged(LqgAdaptError):
    pass


class GainUnstable(LqgAdaptError):
    pass


class InsufficientHistory(LqgAdaptError, ValueError):
    pass


class EmptyData(LqgAdaptError, ValueError):
    pass


class RankDeficient(LqgAdaptError):
    pass


class BadSplit(LqgAdaptError, ValueError):
    pass


class SingularInnovation(LqgAdaptError):
    pass


class RealizationFailed(LqgAdaptError):
    pass


class RunFailed(LqgAdaptError):
    """A run aborted during an episode; ``episode`` is -1 for the warm-up."""

    def __init__(self, episode, cause):
        self.episode = episode
        self.cause = cause
        super().__init__(f"run failed in episode {episode}: {type(cause).__name__}: {cause}")


class ConfigError(LqgAdaptError):
    pass


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError):
    """Aggregated configuration problems; ``errors`` holds one message per problem."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))
