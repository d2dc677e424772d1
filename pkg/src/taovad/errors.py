"""Exception hierarchy shared across the engine.

Each class maps to one CLI exit code so scripted callers can branch on
failure kind without parsing messages.
"""


class TaovadError(Exception):
    """Base class for all engine errors."""


class ValidationError(TaovadError, ValueError):
    """Invalid domain value, parameter, or configuration. CLI exit 2."""


class FormatError(ValidationError):
    """Malformed serialized artifact. Carries the offending location."""

    def __init__(self, message: str, *, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where = f"{where}{line}:"
        super().__init__(f"{where} {message}" if where else message)


class IngestError(TaovadError, OSError):
    """Dataset directory unreadable or structurally broken. CLI exit 3."""


class ProtocolError(TaovadError, RuntimeError):
    """Segmenter backend misbehaved or broke the wire protocol. CLI exit 4."""


class UndefinedMetricError(TaovadError, ValueError):
    """Requested metric has no defined value on this input. CLI exit 5."""
