"""Error taxonomy shared by all modules and the CLI.

Each exception maps to a CLI exit code: config errors exit 2, data errors
exit 3, numerical non-convergence exits 4.
"""


class LidarUdaError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 3


class ConfigError(LidarUdaError):
    exit_code = 2


class EmptyInput(LidarUdaError):
    pass


class InvalidSensorModel(LidarUdaError):
    pass


class InsufficientPoints(LidarUdaError):
    pass


class NoPlaneFound(LidarUdaError):
    exit_code = 4


class MissingLabels(LidarUdaError):
    pass


class DegenerateInstance(LidarUdaError):
    pass


class InsufficientSamples(LidarUdaError):
    pass


class ShapeMismatch(LidarUdaError):
    pass


class EmptyAdmissibleSet(LidarUdaError):
    pass


class InvalidMarginals(LidarUdaError):
    pass


class InvalidCost(LidarUdaError):
    pass


class InvalidShape(LidarUdaError):
    pass


class UnmappedLabel(LidarUdaError):
    pass


class CorruptFile(LidarUdaError):
    pass


class InvalidSpec(LidarUdaError):
    pass


class NotConverged(LidarUdaError):
    exit_code = 4
