"""Exception hierarchy shared across the package."""


class TopoNavError(Exception):
    """Base class for every error raised by this package."""


class ZeroNormError(TopoNavError):
    """A raw descriptor has (near-)zero norm and no usable direction."""


class DimMismatchError(TopoNavError):
    """Two descriptors (or a descriptor and a map) disagree on dimension."""


class EmptyCandidatesError(TopoNavError):
    """A match was requested against an empty candidate set."""


class StreamTooShortError(TopoNavError):
    """The descriptor stream is too short for threshold calibration."""


class BadThresholdsError(TopoNavError):
    """A threshold configuration violates its ordering or range rules."""


class UnknownNodeError(TopoNavError):
    """A node id does not exist in the map."""


class SelfArcError(TopoNavError):
    """An arc from a node to itself was requested."""


class NoPathError(TopoNavError):
    """The goal node is unreachable from the start node."""


class FormatError(TopoNavError):
    """A serialized map or stream document is malformed."""


class VersionError(TopoNavError):
    """A serialized map declares an unsupported format version."""


class NonMonotonicFrameError(TopoNavError):
    """Frame indices in a stream must strictly increase."""


class FrozenMapError(TopoNavError):
    """A finalized map cannot be mutated."""


class InvalidPhaseError(TopoNavError):
    """A navigation step was requested in a terminal or unstarted phase."""


class GoalNotInMapError(TopoNavError):
    """The goal descriptor does not localize to any map node."""


class UnreachableWaypointError(TopoNavError):
    """The waypoint follower exhausted its step budget."""
