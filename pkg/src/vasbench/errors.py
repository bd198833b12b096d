"""Exception types raised across the harness."""


class VasbenchError(Exception):
    """Base class for every error the harness raises on purpose."""

    kind = "error"

    def to_dict(self):
        return {"error": self.kind, "message": str(self)}


class DimensionError(VasbenchError, ValueError):
    kind = "dimension_mismatch"


class RasterFormatError(VasbenchError, ValueError):
    kind = "raster_format"


class PoseFormatError(VasbenchError, ValueError):
    kind = "pose_format"


class ManifestError(VasbenchError, ValueError):
    kind = "manifest"


class MissingFrameError(VasbenchError, FileNotFoundError):
    """A per-frame file referenced by a manifest is absent or unreadable."""

    kind = "missing_frame"

    def __init__(self, index, channel, path=None):
        self.index = index
        self.channel = channel
        self.path = path
        msg = f"frame {index}: missing {channel} file"
        if path is not None:
            msg += f" ({path})"
        super().__init__(msg)

    def to_dict(self):
        d = super().to_dict()
        d.update(index=self.index, channel=self.channel)
        return d


class GeometryMissingError(VasbenchError):
    kind = "missing_geometry"


class NothingToEvaluateError(VasbenchError):
    kind = "nothing_to_evaluate"


class SpecError(VasbenchError, ValueError):
    kind = "invalid_spec"


class ProtocolError(VasbenchError):
    """The method subprocess violated the wire protocol."""

    kind = "protocol"

    def __init__(self, message, frame=None):
        self.frame = frame
        if frame is not None:
            message = f"frame {frame}: {message}"
        super().__init__(message)


class MethodError(VasbenchError):
    """The method subprocess crashed or timed out; ``run`` holds partial results."""

    kind = "method_failed"

    def __init__(self, message, run=None):
        self.run = run
        super().__init__(message)
