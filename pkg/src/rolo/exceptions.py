"""Exception hierarchy shared by all rolo modules."""


class RoloError(Exception):
    """Base class for every error raised by this package."""


class GimbalLock(RoloError):
    """Pitch too close to +-90 deg for a unique ZYX decomposition."""


class DegenerateRing(RoloError):
    """A scan ring has too few points for the smoothness window."""


class OutOfBounds(RoloError):
    """A point falls outside the voxel grid."""


class EmptyScan(RoloError):
    pass


class InsufficientCorrespondences(RoloError):
    pass


class NumericalFailure(RoloError):
    pass


class DegenerateFrame(RoloError):
    """Front-end registration failed; caller should fall back to prediction."""


class DegenerateSubmap(RoloError):
    pass


class NoAssociation(RoloError):
    pass


class DataError(RoloError):
    """Input data could not be read or parsed (CLI exit code 3)."""


class MalformedFile(DataError):
    def __init__(self, path, offset, reason):
        self.path = str(path)
        self.offset = offset
        self.reason = reason
        super().__init__(f"{self.path}: malformed at byte offset {offset}: {reason}")


class MalformedLine(DataError):
    def __init__(self, path, line, reason):
        self.path = str(path)
        self.line = line
        self.reason = reason
        super().__init__(f"{self.path}:{line}: {reason}")


class NonOrthonormalRotation(MalformedLine):
    pass


class ConfigError(RoloError):
    """Invalid configuration (CLI exit code 2)."""
