"""Exception classes. Each carries the process exit code used by the CLI."""


class SkelSignError(Exception):
    exit_code = 1


class DimensionError(SkelSignError, ValueError):
    exit_code = 2


class ConfigError(SkelSignError, ValueError):
    exit_code = 3


class FormatError(SkelSignError, ValueError):
    exit_code = 4

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class InputError(SkelSignError, ValueError):
    exit_code = 5


class ValidationError(SkelSignError, ValueError):
    exit_code = 6


class ModeError(SkelSignError, ValueError):
    exit_code = 7


class FusionError(SkelSignError, ValueError):
    exit_code = 8


class NumericError(SkelSignError, ArithmeticError):
    exit_code = 9


class DataError(SkelSignError, ValueError):
    exit_code = 10
