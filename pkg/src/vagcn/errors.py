"""Exception types shared across the package."""


class VagcnError(Exception):
    pass


class DimensionError(VagcnError, ValueError):
    """Operand shapes are incompatible."""


class BoundsError(VagcnError, IndexError):
    """An index table points outside the indexed tensor."""


class StaleTapeError(VagcnError, RuntimeError):
    """Backward was requested on a tape that has already been consumed."""


class NumericError(VagcnError, FloatingPointError):
    """A NaN or infinity showed up where finite values are required."""


class NondeterminismError(VagcnError, RuntimeError):
    pass


class FormatError(VagcnError, ValueError):
    """Base class for binary/text file format problems."""


class MagicError(FormatError):
    pass


class VersionError(FormatError):
    pass


class LengthError(FormatError):
    pass


class LabelError(FormatError):
    pass


class OffParseError(FormatError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MissingCountsError(OffParseError):
    pass


class VertexCountError(OffParseError):
    pass


class FaceIndexError(OffParseError):
    pass


class FaceArityError(OffParseError):
    pass


class ConfigError(VagcnError, ValueError):
    pass
