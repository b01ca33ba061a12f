"""Exception hierarchy. Every domain failure derives from ``SkillScaleError``."""

from __future__ import annotations


class SkillScaleError(Exception):
    """Base class for domain errors (CLI maps these to exit code 1)."""


class ParseError(SkillScaleError):
    def __init__(self, document: str, field: str, message: str = "") -> None:
        self.document = document
        self.field = field
        detail = f": {message}" if message else ""
        super().__init__(f"document {document!r}: invalid field {field!r}{detail}")


class ConflictError(SkillScaleError):
    pass


class FitError(SkillScaleError):
    pass


class PreconditionError(SkillScaleError):
    pass


class StaleVersionError(SkillScaleError):
    pass


class WorkspaceError(SkillScaleError):
    """Workspace could not be listed; distinct from a missing artifact."""
