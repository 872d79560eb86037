"""Exception types raised across the package.

Every error carries a short ``code`` matching its class name so the CLI can
print a one-line diagnostic without inspecting the type hierarchy.
"""

from __future__ import annotations


class QamineError(Exception):
    """Base class for all package errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


class MalformedLine(QamineError):
    def __init__(self, line_no: int, reason: str = "") -> None:
        self.line_no = line_no
        msg = f"line {line_no}: malformed line"
        if reason:
            msg += f" ({reason})"
        super().__init__(msg)


class InvalidTarget(QamineError):
    def __init__(self, line_no: int, target: object = None) -> None:
        self.line_no = line_no
        super().__init__(f"line {line_no}: invalid click target {target!r}")


class OrphanEvent(QamineError):
    def __init__(self, session_id: str) -> None:
        self.session_id = session_id
        super().__init__(f"session {session_id!r}: serp/click event before any query")


class ZeroImpressions(QamineError):
    pass


class DegenerateLabels(QamineError):
    pass


class NoPositives(QamineError):
    pass


class BadFeatureIndex(QamineError):
    pass


class FeatureOrderMismatch(QamineError):
    pass


class EmptyGroup(QamineError):
    pass


class UnsupportedModel(QamineError):
    pass


class InvalidThresholds(QamineError):
    pass


class EmptyText(QamineError):
    pass


class LengthMismatch(QamineError):
    pass


class EmptyDataset(QamineError):
    pass


class LossTargetMismatch(QamineError):
    pass


class EvenPanel(QamineError):
    pass


class ConfigError(QamineError):
    pass
