"""Exception types raised by gazetrack."""


class GazetrackError(Exception):
    """Base class for all library errors."""


class InvalidStateError(GazetrackError, ValueError):
    """Tracker state with non-positive area or aspect ratio."""


class SingularUpdateError(GazetrackError, ArithmeticError):
    """Innovation covariance is numerically singular."""


class DegenerateWeightsError(GazetrackError, ValueError):
    pass


class FeatureUnavailableError(GazetrackError, LookupError):
    """Appearance vector missing on the track or detection side."""


class MalformedHeadError(GazetrackError, ValueError):
    pass


class InvalidTensorError(GazetrackError, ValueError):
    pass


class EvaluationInputError(GazetrackError, ValueError):
    pass


class EmptyReportError(GazetrackError, ValueError):
    pass


class ConfigError(GazetrackError, ValueError):
    """Malformed configuration. ``key_path`` names the offending key."""

    def __init__(self, key_path: str, message: str):
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}")


class LineFormatError(GazetrackError, ValueError):
    """Unparseable line in a text export. ``line`` is 1-based."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")
