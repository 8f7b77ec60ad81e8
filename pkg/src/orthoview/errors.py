"""Exception hierarchy shared by every orthoview module."""


class OrthoviewError(Exception):
    """Base class for all library errors."""


class ParseError(OrthoviewError):
    pass


class MalformedHeader(ParseError):
    pass


class CountMismatch(ParseError):
    pass


class NonFiniteValue(ParseError):
    pass


class EmptyCloud(OrthoviewError):
    pass


class InvalidDimension(OrthoviewError):
    pass


class DegenerateCloud(OrthoviewError):
    """The cloud has no unique principal-axis frame (collinear or isotropic)."""


class BadResolution(OrthoviewError):
    pass


class BadConfig(OrthoviewError):
    pass


class DimensionMismatch(OrthoviewError):
    pass


class ZeroVector(OrthoviewError):
    pass


class UnknownLabel(OrthoviewError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class DatasetTooSmall(OrthoviewError):
    pass


class ConfigInvalid(OrthoviewError):
    pass


class NoPredictions(OrthoviewError):
    pass


class NoWindows(OrthoviewError):
    pass


class EmptyStore(OrthoviewError):
    pass


class PoseOutsideObject(OrthoviewError):
    pass


class NotFamiliar(OrthoviewError):
    """No stored grasp template is close enough to the query object."""
