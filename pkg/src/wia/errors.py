"""Exception taxonomy shared by all wia modules.

Every error carries enough context to name the offending input (a document
path like ``heroes[0].hp``, a dataset line number, an HTTP status) so batch
tools can log precisely without string-parsing messages.
"""

from __future__ import annotations


class WiaError(Exception):
    """Base class for all errors raised by this package."""


# --- document / state model ---

class MalformedDocument(WiaError):
    """Input text is not parseable at all (e.g. invalid JSON)."""


class SchemaViolation(WiaError):
    """Document parses but does not fit the schema (missing/extra field,
    enum out of range, wrong type). ``path`` names the offending location;
    ``line`` is set when reading line-delimited datasets."""

    def __init__(self, message: str, path: str = "", line: int | None = None):
        self.path = path
        self.line = line
        where = f" at {path}" if path else ""
        where += f" (line {line})" if line is not None else ""
        super().__init__(message + where)


class InvariantViolation(WiaError):
    """Values are schema-valid but break a domain invariant (hp > max_hp,
    duplicate entity id, ...)."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{message} at {path}" if path else message)


# --- diff engine ---

class MatchMismatch(WiaError):
    """Two states do not belong to the same match."""


class StaleDelta(WiaError):
    """A delta's recorded old value does not match the state it is applied to."""


class UnknownEntity(WiaError):
    """A delta references an entity absent from the target state."""


# --- replay pipeline ---

class UnorderedTrajectory(WiaError):
    """Trajectory states are not strictly increasing in time."""


class IoFailure(WiaError):
    """Filesystem read/write failed."""


class InsufficientData(WiaError):
    """Balancing target unreachable. Reported, never raised by balance()."""


# --- reward verifier ---

class NoAnswerTag(WiaError):
    """Completion contains no <answer>...</answer> span."""


class MalformedAnswer(WiaError):
    """Answer span exists but does not parse as a state-change document."""


# --- simulator ---

class InvalidAction(WiaError):
    """Action label is not in the registry."""


class SearchBudgetExceeded(WiaError):
    """Benchmark search ran out of ticks before filling difficulty quotas."""

    def __init__(self, message: str, missing: dict[int, int] | None = None):
        self.missing = dict(missing or {})
        super().__init__(message)


# --- trainer ---

class GroupTooSmall(WiaError):
    """Advantage normalization needs at least two completions."""


class MissingTrack(WiaError):
    """A completion lacks one of the three required log-probability tracks."""


class DivergedLoss(WiaError):
    """Training produced a non-finite loss."""


# --- gateway ---

class GatewayError(WiaError):
    """Base for network-facing failures."""


class AuthMissing(GatewayError):
    """The configured auth environment variable is not set."""


class PromptTooLong(GatewayError):
    """Rendered prompt exceeds the endpoint's prompt length budget."""


class HttpStatus(GatewayError):
    """Endpoint returned a non-success HTTP status."""

    def __init__(self, code: int, body: str = ""):
        self.code = code
        super().__init__(f"HTTP {code}: {body[:200]}")


class RequestTimeout(GatewayError):
    """Request exceeded the configured timeout."""


class RetriesExhausted(GatewayError):
    """All retry attempts failed; ``last`` holds the final error."""

    def __init__(self, attempts: int, last: Exception):
        self.attempts = attempts
        self.last = last
        super().__init__(f"gave up after {attempts} attempts: {last}")


# --- evalkit ---

class ForecastFailure(WiaError):
    """Forecaster failed for one candidate action."""


class AllCandidatesFailed(WiaError):
    """Every candidate action's forecast failed."""


# --- cli ---

class UsageError(WiaError):
    """Bad command line; maps to exit code 1."""
