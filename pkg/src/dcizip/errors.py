"""Exception hierarchy shared by every dcizip module."""


class DciZipError(Exception):
    """Base class for all package errors."""


class ConfigError(DciZipError, ValueError):
    """Inconsistent configuration, schema mismatch or invalid argument."""


class SchemaError(ConfigError):
    """Malformed schema file or schema definition."""


class CorruptInputError(DciZipError, ValueError):
    """Input data that cannot have been produced by the matching encoder."""


class TruncatedStreamError(CorruptInputError):
    """A compressed stream ended before the message was fully decoded."""


class TrainingDivergedError(DciZipError, RuntimeError):
    """Training produced a non-finite loss."""
