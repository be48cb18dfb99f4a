"""Exception types raised by the calibration library and service."""


class CamcalError(Exception):
    """Base class for all camcal domain errors."""


class BehindCamera(CamcalError):
    """A 3D point with Z <= 0 was passed to a projection, or a recovered
    board pose placed the board behind the camera."""


class NonConvergence(CamcalError):
    """Iterative distortion inversion failed; the coefficients are outside
    the invertible regime for this point."""


class DegenerateConfiguration(CamcalError):
    """Homography estimation got fewer than 4 correspondences or a
    collinear point set."""


class DegenerateMotion(CamcalError):
    """The closed-form intrinsics system is rank-deficient, e.g. every
    board view is fronto-parallel."""


class InsufficientData(CamcalError):
    """Fewer than the minimum number of usable views for calibration."""


class NumericalFailure(CamcalError):
    """Non-finite cost or Jacobian encountered during refinement."""


class InfeasibleTarget(CamcalError):
    """No board pose keeps enough of the board visible for the given
    camera guess."""


class SessionNotCapturing(CamcalError):
    """An observation was submitted to a session that is complete or
    failed."""


class StorageFailure(CamcalError):
    """The record store could not persist or read a document."""


class ProtocolError(CamcalError):
    """The server answered a client request with an unexpected status."""
