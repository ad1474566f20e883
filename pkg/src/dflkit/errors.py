"""Exception types shared across the toolkit.

The CLI maps these onto distinct exit codes: configuration problems,
malformed input data, and degenerate-geometry / no-detection outcomes
are reported separately.
"""


class DflkitError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(DflkitError):
    """Invalid scene/simulation/CLI configuration."""


class SceneError(ConfigError):
    """Invalid sensor deployment (duplicate ids, coincident sensors, ...)."""


class NoDetectionError(DflkitError):
    """No link exceeded the detection threshold; nothing to localize."""


class DegenerateGeometryError(DflkitError):
    """The weighted least squares normal matrix is singular or too
    ill-conditioned to invert (e.g. all detected lines near-parallel)."""


class FrameError(DflkitError):
    """Base class for wire-frame codec errors."""


class FrameLengthError(FrameError):
    """Frame byte length inconsistent with its flag."""


class FrameFlagError(FrameError):
    """FLAG byte is neither 0 (data) nor 1 (command)."""


class FrameChannelError(FrameError):
    """CID outside the 11..26 channel range."""


class FrameSensorIdError(FrameError):
    """NID outside 1..K."""


class TraceError(DflkitError):
    """Base class for trace-file errors."""


class TraceFormatError(TraceError):
    """Unrecognized magic line / version, or unparseable header."""


class TraceConsistencyError(TraceError):
    """Header and body disagree (missing cells, bad counts, ...)."""


class IncompleteRoundError(TraceError):
    """A measurement round is missing a sensor's turn on some channel."""

    def __init__(self, channel: int, sensor: int):
        self.channel = channel
        self.sensor = sensor
        super().__init__(
            f"incomplete round: sensor {sensor} never transmitted on channel {channel}"
        )


class ProtocolOrderWarning(UserWarning):
    """Data frames arrived out of the expected sensor order."""
