"""Exception hierarchy shared across the engine, service, and CLI."""


class SketchAnimError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(SketchAnimError):
    """Invalid user input (bad partition, keyframes, config values).

    ``field`` optionally names the offending field using a dotted/indexed
    path, e.g. ``keyframes[0].dx``.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class SvgParseError(SketchAnimError):
    """Malformed SVG document. ``offset`` is the byte offset of the failure."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(message)
        self.offset = offset


class UnsupportedSvgFeatureError(SketchAnimError):
    """SVG content outside the supported subset. ``feature`` names it."""

    def __init__(self, feature: str):
        super().__init__(f"unsupported SVG feature: {feature}")
        self.feature = feature


class EmptySketchError(SketchAnimError):
    """The SVG contained no drawable path content."""


class RemotePriorError(SketchAnimError):
    """Remote scorer failure (connection, shape mismatch, non-finite values).

    Jobs that hit this pause with a resumable checkpoint instead of failing.
    """


class CheckpointError(SketchAnimError):
    """Corrupt or incompatible parameter checkpoint."""


class ProjectVersionError(SketchAnimError):
    """Project file carries an unknown schema version."""

    def __init__(self, version):
        super().__init__(f"unknown project schema version: {version!r}")
        self.version = version
