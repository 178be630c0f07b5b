"""Exception hierarchy shared by the library, the CLI, and the bindings.

Exit-code mapping used by the CLI: validation problems exit 2, numeric or
training failures exit 3, anything else 1.
"""


class FrametokError(Exception):
    exit_code = 1


class ValidationError(FrametokError):
    """Bad input: shapes, configuration values, contract violations."""

    exit_code = 2


class FormatError(ValidationError):
    """A .dft file with a bad magic, version, or dtype tag."""


class CorruptionError(ValidationError):
    """A .dft file whose payload disagrees with its header."""


class NumericError(FrametokError):
    """Non-finite values where finite ones were required."""

    exit_code = 3


class TrainingError(NumericError):
    """Divergence during the training demo; carries the failing step."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
