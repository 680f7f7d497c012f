"""Exception hierarchy for fuzzlab.

Each category carries the process exit code the CLI uses for it.
"""


class FuzzlabError(Exception):
    """Base class for every error raised by fuzzlab."""

    exit_code = 1


class ConfigError(FuzzlabError):
    """Invalid configuration, arguments or plan."""

    exit_code = 2


class DataError(FuzzlabError):
    """Malformed packets, traces, datasets or model inputs."""

    exit_code = 3


class InapplicableAnalysis(FuzzlabError):
    """The requested analysis does not apply to this data."""

    exit_code = 4


# packet model


class UnknownField(ConfigError):
    pass


class ValueOutOfRange(DataError):
    pass


class ComputedFieldWrite(DataError):
    pass


class MissingField(DataError):
    pass


class TruncatedPacket(DataError):
    pass


class UnknownLayerStack(DataError):
    pass


# fuzzing


class NotFuzzable(ConfigError):
    pass


class ComputedFieldInAList(ConfigError):
    pass


class PoolExhausted(DataError):
    pass


# simulation


class InvalidPlanForScenario(ConfigError):
    pass


class IncompleteSession(DataError):
    pass


class MixedScenario(DataError):
    pass


# dataset


class LengthMismatch(DataError):
    pass


class BadLength(DataError):
    pass


class NonZeroTail(DataError):
    pass


class BadStack(DataError):
    pass


class EmptyClass(DataError):
    pass


# models


class ShapeMismatch(DataError):
    pass


class NonFiniteLoss(DataError):
    pass


# analysis


class FeatureOutOfRange(ConfigError):
    pass


class NoFuzzedElements(InapplicableAnalysis):
    pass


class WrongFamily(ConfigError):
    pass


# file formats


class ParseError(DataError):
    """A line of a JSON Lines file could not be parsed."""

    def __init__(self, path: str, line_number: int, reason: str):
        super().__init__(f"{path}:{line_number}: {reason}")
        self.path = path
        self.line_number = line_number


class SchemaVersionMismatch(DataError):
    pass
