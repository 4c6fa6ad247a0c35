"""Exception hierarchy shared by the pipeline stages and mapped to CLI exit codes."""


class AltpredError(Exception):
    exit_code = 1


class ConfigError(AltpredError, ValueError):
    """Invalid or unreadable configuration."""

    exit_code = 2


class DataError(AltpredError, ValueError):
    """Input data that cannot be used (bad schema, empty sets, missing joins)."""

    exit_code = 3


class SchemaError(DataError):
    pass


class TrainingDiverged(AltpredError, RuntimeError):
    exit_code = 4
