"""Exception types shared across the package."""


class ElevmapError(Exception):
    """Base class for all elevmap errors."""


class BoundaryError(ElevmapError, ValueError):
    """An operation touched cells outside the extent of a field or grid."""


class PlacementError(ElevmapError, ValueError):
    """A terrain feature could not be placed inside the requested extent."""


class AlignmentError(ElevmapError, ValueError):
    """Two grids that must share the same GridSpec do not."""


class DataError(ElevmapError, ValueError):
    """Array contents violate a contract (non-finite values, bad shapes)."""


class ProtocolError(ElevmapError, RuntimeError):
    """Malformed frame on the reconstruction wire protocol."""


class EndpointError(ElevmapError, RuntimeError):
    """The reconstruction endpoint is unreachable or failed mid-session."""
