"""Exception hierarchy shared by every pipeline stage.

Each error carries a short machine name (the class name) so the CLI can
report it on a single line.
"""

from __future__ import annotations


class ActirepError(Exception):
    """Base class for all pipeline errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


# ingest
class MalformedRow(ActirepError):
    def __init__(self, line: int, message: str = "") -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if message else f"line {line}")


class NonMonotoneTimestamp(ActirepError):
    pass


class EmptyFile(ActirepError):
    pass


class OutOfRangeScore(ActirepError):
    pass


class DuplicateParticipant(ActirepError):
    pass


# signal
class InvalidFilterSpec(ActirepError):
    pass


class SequenceTooShort(ActirepError):
    pass


class LengthMismatch(ActirepError):
    pass


# actigram
class Excluded(ActirepError):
    """Raised when a participant cannot contribute a map."""

    TOO_SHORT = "TooShort"
    TOO_MISSING = "TooMissing"

    def __init__(self, reason: str, detail: str = "") -> None:
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


class BadMagic(ActirepError):
    pass


class VersionMismatch(ActirepError):
    pass


class TruncatedFile(ActirepError):
    pass


# nncore
class ShapeMismatch(ActirepError):
    pass


class NotScalarLoss(ActirepError):
    pass


class DetachedGraph(ActirepError):
    pass


class NonFiniteError(ActirepError):
    pass


# models
class InsufficientData(ActirepError):
    pass


class ShapeHeterogeneity(ActirepError):
    pass


class DimOutOfRange(ActirepError):
    pass


class InsufficientClassData(ActirepError):
    pass


class SingleClassData(ActirepError):
    pass


class LeakageError(ActirepError):
    """A synthetic or held-out participant reached a place it must not."""


# labels / eval
class MissingSF12(ActirepError):
    pass


class EmptyClass(ActirepError):
    pass


class SingleClassAUC(ActirepError):
    pass


class NonFinite(ActirepError):
    pass


class ConfigError(ActirepError):
    pass
