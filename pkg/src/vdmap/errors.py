"""Exception hierarchy shared by all vdmap modules.

Every error carries an ``exit_code`` used by the command line driver:
1 usage, 2 data error, 3 internal invariant violation.
"""


class VdmapError(Exception):
    exit_code = 2


class UsageError(VdmapError):
    exit_code = 1


class ConfigError(VdmapError):
    pass


class InvariantViolation(VdmapError):
    exit_code = 3


class NonPositiveDepth(VdmapError, ValueError):
    pass


class OutOfContainer(VdmapError, IndexError):
    pass


class InvalidPose(VdmapError, ValueError):
    pass


class EmptyBatch(VdmapError, ValueError):
    pass


class InsufficientSupport(VdmapError):
    pass


class DimensionMismatch(VdmapError, ValueError):
    pass


class NoValidDepth(VdmapError):
    pass


class UnknownKeyframe(VdmapError, KeyError):
    pass


class EmptyGraph(VdmapError):
    pass


class EmptyInput(VdmapError, ValueError):
    pass


class MissingFile(VdmapError, FileNotFoundError):
    pass


class MalformedLine(VdmapError):
    def __init__(self, path, line_number, text=""):
        self.path = str(path)
        self.line_number = line_number
        self.text = text
        super().__init__(f"{self.path}:{line_number}: malformed line {text!r}")


class NoAssociations(VdmapError):
    pass


class IoFailure(VdmapError, OSError):
    pass


class MalformedHeader(VdmapError):
    pass


class UnsupportedProperty(VdmapError):
    pass
