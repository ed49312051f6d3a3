"""Exception types shared across the pipeline."""

from __future__ import annotations


class MutagentError(Exception):
    """Base class for every error raised by this package."""


class SubjectSyntaxError(MutagentError):
    """The subject module cannot be tokenized."""


class StalePoint(MutagentError):
    """A mutation point no longer matches the module source."""


class PatchFailure(MutagentError):
    """A unified diff does not apply cleanly to its target text."""


class SpawnError(MutagentError):
    """The subject interpreter or shim could not be started at all.

    Distinct from a snippet failing: that is an ExecutionResult with a
    nonzero exit status.
    """


class CoverageToolError(MutagentError):
    """The coverage shim is unavailable or produced an unparseable report."""


class IllegalPhase(MutagentError):
    """A conversation operation was called in a phase that forbids it."""


class TransportError(MutagentError):
    """A retryable network-level failure while talking to the model API."""


class ProviderError(MutagentError):
    """The model API answered with a non-2xx status."""

    def __init__(self, status: int, body: str):
        super().__init__(f"provider returned HTTP {status}: {body[:500]}")
        self.status = status
        self.body = body


class ReplayMiss(MutagentError):
    """Replay mode found no stored response for the request key."""


class SessionAborted(MutagentError):
    """A mutant session hit an unrecoverable backend error."""
