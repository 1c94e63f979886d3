"""Exception types raised by the export tool."""


class ExporterError(Exception):
    """Base class for every failure this package raises on purpose."""


class ModelUnavailable(ExporterError):
    """The named encoder cannot be constructed in this environment."""


class UnreadableInput(ExporterError):
    """An input named by the manifest cannot be read or decoded.

    Carries the manifest id so the offending record can be located.
    """

    def __init__(self, record_id: str, reason: str):
        super().__init__(f"input {record_id!r}: {reason}")
        self.record_id = record_id
        self.reason = reason


class MalformedManifest(ExporterError):
    """A manifest line is not a valid record."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"manifest line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class DuplicateManifestId(ExporterError):
    """Two manifest lines share an id."""


class ExportFailure(ExporterError):
    """Encoder output or output files could not be produced."""
