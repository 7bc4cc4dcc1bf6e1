"""Exception types shared across the pipeline.

Every error raised on purpose derives from ForgeError so the CLI can map
failures to exit codes (1 usage, 2 data error, 3 failure rate exceeded).
"""


class ForgeError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(ForgeError, ValueError):
    """An argument violates a documented precondition (non-finite, out of range, ...)."""


class DegenerateOrbitError(ForgeError):
    """Orbit angles place the source along the patient axis; detector axes undefined."""


class ProjectionBehindSourceError(ForgeError):
    """A point to project has non-positive depth along the view ray."""


class MeshDegeneracyError(ForgeError):
    """Swept tube self-intersects (curvature too high for the ring spacing)."""


class VoxelizationIntegrityError(ForgeError):
    """Ray-parity voxelization found odd crossing counts; mesh is not watertight."""


class IncompatibleGridsError(ForgeError):
    """Two volumes that must share dims/spacing/origin do not."""


class NoDetectionError(ForgeError):
    """A belief map is all zero; no landmark can be extracted."""


class DataFormatError(ForgeError):
    """A file on disk is malformed (bad header field, truncated raw, wrong type)."""


class GenerationFailureRateError(ForgeError):
    """More than the tolerated fraction of samples failed during generation."""
