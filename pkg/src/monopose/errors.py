"""Exception types raised by monopose."""


class MonoposeError(Exception):
    """Base class for all library errors."""


# camera model
class NonPositiveDepth(MonoposeError, ValueError):
    pass


class DegenerateAngle(MonoposeError, ValueError):
    pass


# rotation
class InsufficientPoints(MonoposeError, ValueError):
    pass


class DegenerateConfiguration(MonoposeError, ValueError):
    pass


class NoConsensus(MonoposeError):
    """RANSAC found no hypothesis supported by enough inliers."""


class GimbalLockWarning(UserWarning):
    pass


# translation
class BehindCamera(MonoposeError, ValueError):
    pass


class NearParallel(MonoposeError, ValueError):
    pass


class InsufficientParallax(MonoposeError):
    pass


class AllParallel(MonoposeError):
    pass


class AmbiguousSign(MonoposeError):
    pass


# simulation
class FrustumTooTight(MonoposeError):
    pass


# track / calibration io
class ParseError(MonoposeError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateObservation(ParseError):
    pass


class FrameOutOfRange(MonoposeError, IndexError):
    pass
