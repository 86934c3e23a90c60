"""Exception hierarchy. ``exit_code`` is what the command line returns."""


class SdpError(Exception):
    exit_code = 1


class ConfigError(SdpError, ValueError):
    exit_code = 2


class ContainerError(SdpError):
    """Base for SDPB decoding failures; each subclass carries a distinct ``code``."""

    exit_code = 3
    code = "container"


class BadMagicError(ContainerError):
    code = "bad-magic"


class VersionMismatchError(ContainerError):
    code = "version-mismatch"


class TruncatedError(ContainerError):
    code = "truncated"


class SizeMismatchError(ContainerError):
    code = "size-mismatch"


class ChecksumError(ContainerError):
    code = "checksum-mismatch"


class NumericalError(SdpError, ArithmeticError):
    exit_code = 4
