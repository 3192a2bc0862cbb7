class BBTuneError(Exception):
    """Base class of every error raised on purpose by bbtune."""


class InvalidParameterError(BBTuneError, ValueError):
    pass


class OracleUnavailableError(BBTuneError):
    """The oracle could not be reached, retries included."""


class ProtocolError(BBTuneError):
    """A wire document could not be decoded or violates the protocol."""


class ConfigError(BBTuneError):
    def __init__(self, field, message):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}")


class StageAborted(BBTuneError):
    """An oracle failure stopped a stage; ``record`` holds the calls made so far."""

    def __init__(self, message, record):
        self.record = record
        super().__init__(message)
