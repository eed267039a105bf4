"""Exception hierarchy shared by every flowshadow module."""


class FlowShadowError(Exception):
    """Base class for all library errors."""


class IdentifierError(FlowShadowError, KeyError):
    """A whisker id was not found in the layout."""

    def __str__(self):
        return Exception.__str__(self)


class ConfigurationError(FlowShadowError, ValueError):
    """Invalid layout, calibration, model or scenario settings."""


class UnsupportedConfigurationError(ConfigurationError):
    pass


class MissingDataError(FlowShadowError, ValueError):
    """A whisker expected by the layout has no samples."""

    def __init__(self, whisker_ids):
        self.whisker_ids = sorted(whisker_ids)
        super().__init__(f"no samples for whisker id(s): {self.whisker_ids}")


class UndefinedDirectionError(FlowShadowError, ValueError):
    """Direction of a zero vector was requested."""


class NoSignalError(FlowShadowError, ValueError):
    pass


class InsufficientDataError(FlowShadowError, ValueError):
    pass


class DegenerateGeometryError(FlowShadowError, ValueError):
    pass


class DataFormatError(FlowShadowError, ValueError):
    """Malformed row in one of the CSV formats."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
