"""Exception types shared across the package."""


class PeersaError(Exception):
    """Base class for all errors raised by this package."""


# --- geometry ---

class BehindCamera(PeersaError):
    """Point has non-positive depth in the camera frame."""


class DegenerateScale(PeersaError):
    """Focal-surface scale too small to invert."""


# --- integration engine ---

class EmptySession(PeersaError):
    """Capture session contains no captures."""


class ChannelMismatch(PeersaError):
    """Channel counts disagree (across captures, or image vs. operation)."""


class IndexOutOfRange(PeersaError):
    """Capture index outside [0, N)."""


class BadGeometry(PeersaError):
    """Geometric precondition violated (e.g. occluder at or beyond focus)."""


# --- masking ---

class SourceUnavailable(PeersaError):
    """Requested mask source cannot be computed for a capture."""


# --- autofocus ---

class InsufficientCoverage(PeersaError):
    """Too few valid pixels in the region of interest."""


class NoContrast(PeersaError):
    """Focus search found no usable image contrast."""


# --- simulator ---

class DensityUnreachable(PeersaError):
    """Occluder placement could not reach the requested density."""


class LimitExceeded(PeersaError):
    """Trajectory extent violates the mechanical limits."""


class NoValidPixels(PeersaError):
    """Metric region contains no valid pixels."""


# --- dataset io ---

class ManifestMissing(PeersaError):
    """No session manifest at the given path."""


class ImageMissing(PeersaError):
    """Referenced image file does not exist."""

    def __init__(self, path):
        super().__init__(f"image file not found: {path}")
        self.path = str(path)


class PoseInvalid(PeersaError):
    """Pose matrix failed validation."""

    def __init__(self, index, detail=""):
        msg = f"invalid pose for capture {index}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.index = index


class MixedChannels(PeersaError):
    """Captures in one session have differing channel counts."""


class IoFailure(PeersaError):
    """Read or write to disk failed."""


# --- render service ---

class MalformedMessage(PeersaError):
    """Control message failed validation; state is unchanged."""


class NoSession(PeersaError):
    """Service has no loaded session."""


class EncodingFailure(PeersaError):
    """Frame could not be encoded."""
