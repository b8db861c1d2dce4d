"""Exception types shared across the package."""


class SynthFaceError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(SynthFaceError, ValueError):
    """A parameter array has the wrong shape or non-finite entries."""


class InvalidRigError(SynthFaceError, ValueError):
    """A FaceRig violates one of its structural invariants."""


class InsufficientDataError(SynthFaceError, ValueError):
    """Too few samples to fit a model."""


class ConfigurationError(SynthFaceError, ValueError):
    """A configuration document or asset library is unusable."""


class DegenerateGroundTruthError(SynthFaceError, ValueError):
    """Ground-truth landmarks cannot define a normalizer."""
