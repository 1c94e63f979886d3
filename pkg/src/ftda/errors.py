"""Typed errors shared across the toolkit.

Every failure mode that callers are expected to handle has its own class;
all inherit from ToolkitError so a CLI can catch one type and map it to a
data-error exit code.
"""

from __future__ import annotations


class ToolkitError(Exception):
    """Base class for all toolkit errors."""


# embedding IO
class IoFailure(ToolkitError):
    pass


class MalformedHeader(ToolkitError):
    pass


class TruncatedPayload(ToolkitError):
    pass


class NonFiniteValue(ToolkitError):
    pass


class DuplicateId(ToolkitError):
    pass


class ZeroVector(ToolkitError):
    def __init__(self, row: int):
        super().__init__(f"row {row} has zero norm; direction undefined")
        self.row = row


class MalformedLine(ToolkitError):
    def __init__(self, line_no: int, reason: str = ""):
        msg = f"malformed record at line {line_no}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)
        self.line_no = line_no


class EmptyText(ToolkitError):
    def __init__(self, line_no: int):
        super().__init__(f"empty text at line {line_no}")
        self.line_no = line_no


# sampling
class KTooLarge(ToolkitError):
    pass


class EmptyInput(ToolkitError):
    pass


# shared numeric
class DimensionMismatch(ToolkitError):
    pass


class CountMismatch(ToolkitError):
    pass


class EmptyBatch(ToolkitError):
    pass


# alignment
class EmptyAnchorSet(ToolkitError):
    pass


class NonFiniteLoss(ToolkitError):
    pass


# gap analysis
class DegenerateCovariance(ToolkitError):
    pass


# decoder
class EmptyCorpus(ToolkitError):
    pass


class TextTooLong(ToolkitError):
    def __init__(self, index: int, n_tokens: int, max_len: int):
        super().__init__(
            f"text {index} needs {n_tokens} tokens; max_len {max_len} allows {max_len - 2}"
        )
        self.index = index


# metrics
class LengthMismatch(ToolkitError):
    pass


# pipeline
class UnknownTask(ToolkitError):
    pass


class MissingLabel(ToolkitError):
    pass


class StageError(ToolkitError):
    """Wraps any stage failure inside a pipeline run with the stage name."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage={stage}: {cause}")
        self.stage = stage
        self.cause = cause
