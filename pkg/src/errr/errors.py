"""Exception types shared across the package."""

from __future__ import annotations


class ErrrError(Exception):
    """Base class for all package errors."""


# --- gateway ---------------------------------------------------------------

class AuthError(ErrrError):
    """API key missing from the environment or rejected by the provider."""


class TransportError(ErrrError):
    """Network-level failure that survived the retry policy."""


class ProviderError(ErrrError):
    """Non-success HTTP status from the provider, body attached."""

    def __init__(self, message: str, status: int | None = None, body: object = None):
        super().__init__(message)
        self.status = status
        self.body = body


# --- retrieval --------------------------------------------------------------

class DimensionMismatch(ErrrError):
    """A vector's length disagrees with the expected dimensionality."""


class EmptyIndex(ErrrError):
    """Query against an index that holds no passages."""


class EmptyResult(ErrrError):
    """Malformed search engine response (zero hits are NOT an error)."""


# --- pipelines ---------------------------------------------------------------

class ExtractionEmpty(ErrrError):
    """The extraction stage produced empty model output.

    Carries the rendered prompt and the usage actually spent so the caller
    can still record the stage before applying its fallback.
    """

    def __init__(self, message: str, prompt: str = "", usage=None):
        super().__init__(message)
        self.prompt = prompt
        self.usage = usage


class ParseEmpty(ErrrError):
    """Query-list parsing yielded no queries.

    When raised from a pipeline stage (rather than the bare parser) it
    carries the prompt, raw output, and usage for transcript recording.
    """

    def __init__(self, message: str, raw: str = "", prompt: str = "", usage=None):
        super().__init__(message)
        self.raw = raw
        self.prompt = prompt
        self.usage = usage


# --- evaluation ---------------------------------------------------------------

class FormatError(ErrrError):
    """Unparseable dataset/transcript record; message names the line."""


class SliceOutOfRange(ErrrError):
    """Requested dataset slice extends past the end of the source file."""


class EmptyResults(ErrrError):
    """Aggregation over zero per-example results."""


# --- cli / harness -------------------------------------------------------------

class ConfigError(ErrrError):
    """Invalid run configuration, detected before any work starts."""


class IntegrityError(ErrrError):
    """Persisted index fails its manifest checksum."""
