"""Exception hierarchy shared by every module.

Each concrete class maps to one documented error class; the CLI turns the
``exit_code`` attribute into the process exit status.
"""

from __future__ import annotations


class DiplomaError(Exception):
    exit_code = 1


class InvalidSeed(DiplomaError):
    exit_code = 6


class EncodingError(DiplomaError):
    exit_code = 4


class MissingField(DiplomaError):
    exit_code = 6


class InvalidLifetime(DiplomaError):
    exit_code = 6


class NotAuthorizedKey(DiplomaError):
    exit_code = 6


class InvalidSubmission(DiplomaError):
    exit_code = 6


class DuplicateKey(DiplomaError):
    exit_code = 6


class NotFound(DiplomaError):
    exit_code = 9


class NotSealed(DiplomaError):
    exit_code = 9


class KeyPresent(DiplomaError):
    exit_code = 9


class CorruptBatch(DiplomaError):
    exit_code = 6


class EmptyAggregate(DiplomaError):
    exit_code = 6


class Rejected(DiplomaError):
    exit_code = 6


class InsufficientQuorum(DiplomaError):
    exit_code = 6


class ProofUnavailable(DiplomaError):
    """Base for the reasons a node cannot build a proof of provenance."""

    exit_code = 9


class InsufficientMetadata(ProofUnavailable):
    def __init__(self, message: str, notice=None):
        super().__init__(message)
        self.notice = notice


class UnknownKey(ProofUnavailable):
    pass


class StaleLedger(ProofUnavailable):
    pass


class ConfigError(DiplomaError):
    exit_code = 2


class ScriptError(DiplomaError):
    exit_code = 2

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class TransportError(DiplomaError):
    exit_code = 5
