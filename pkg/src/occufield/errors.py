"""Exception types shared across the package."""


class SceneParseError(ValueError):
    """Scene file is not valid JSON or is missing required fields."""


class SceneValidationError(ValueError):
    """A scene invariant is violated; the message names the invariant."""


class ConfigurationError(ValueError):
    """A parameter combination is degenerate (e.g. collapsed normalization range)."""


class WavDecodeError(ValueError):
    """WAV file is malformed or uses an unsupported encoding."""


class InvalidMetricError(ValueError):
    """The input does not support the requested metric (e.g. insufficient decay)."""
