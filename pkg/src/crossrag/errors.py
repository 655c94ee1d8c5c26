"""Exception taxonomy shared across the package.

Every error raised on purpose derives from CrossRagError so callers can
catch pipeline problems without swallowing programming mistakes.
"""
from __future__ import annotations


class CrossRagError(Exception):
    """Base class for all errors raised by this package."""


# --- knowledge bases ---------------------------------------------------------

class DuplicateIdError(CrossRagError):
    """A knowledge base id was registered twice."""


class SourceUnreadableError(CrossRagError):
    """A knowledge base source file is missing, unreadable, or not UTF-8."""


class MalformedCsvError(CrossRagError):
    """A table source is not valid RFC 4180 CSV."""


class EmptyFileError(CrossRagError):
    """A table source contains no header row."""


class ManifestSyntaxError(CrossRagError):
    """The registry manifest is not the expected JSON document."""


class EmptyRegistryError(CrossRagError):
    """An operation that needs at least one knowledge base got none."""


# --- routing -----------------------------------------------------------------

class EmptyQueryError(CrossRagError):
    """The user query is empty."""


class NoJsonFoundError(CrossRagError):
    """No JSON object could be extracted from a model completion."""


class SchemaMismatchError(CrossRagError):
    """Extracted JSON does not match the routing plan schema."""


class UnknownKbError(CrossRagError):
    """A plan references a knowledge base id that is not registered."""

    def __init__(self, kb_id: str, message: str | None = None) -> None:
        super().__init__(message or f"unknown knowledge base id: {kb_id!r}")
        self.kb_id = kb_id


class EmptyPlanError(CrossRagError):
    """A routing plan contains no subqueries."""


# --- text retrieval ----------------------------------------------------------

class BadChunkParamsError(CrossRagError):
    """Chunking parameters are out of range (overlap must be < chunk size)."""


class NoChunksError(CrossRagError):
    """A document produced no chunks (no lexical tokens at all)."""


class WrongKbKindError(CrossRagError):
    """A retrieval call was made against the wrong kind of knowledge base."""


# --- SQL engine --------------------------------------------------------------

class SqlSyntaxError(CrossRagError):
    """SQL text failed lexing, parsing, or a parse-time invariant.

    Carries the 1-based position and, when known, the set of expected tokens.
    """

    def __init__(self, message: str, line: int = 1, column: int = 1,
                 expected: tuple[str, ...] = ()) -> None:
        suffix = f" (expected {', '.join(expected)})" if expected else ""
        super().__init__(f"line {line}, column {column}: {message}{suffix}")
        self.line = line
        self.column = column
        self.expected = expected


class UnknownTableError(CrossRagError):
    """Query names a table other than the one being queried."""


class UnknownColumnError(CrossRagError):
    """Query references a column that the table does not have."""

    def __init__(self, name: str, message: str | None = None) -> None:
        super().__init__(message or f"unknown column: {name!r}")
        self.name = name


class TypeMismatchError(CrossRagError):
    """Operand types in a comparison or aggregate are incompatible."""


# --- LLM client --------------------------------------------------------------

class LlmError(CrossRagError):
    """Base class for chat-completion transport and lookup failures."""


class LlmTimeoutError(LlmError):
    """The HTTP exchange timed out (after the single permitted retry)."""


class HttpStatusError(LlmError):
    """The HTTP endpoint answered with a non-success status code."""

    def __init__(self, status_code: int, detail: str = "") -> None:
        message = f"HTTP status {status_code}"
        if detail:
            message += f": {detail}"
        super().__init__(message)
        self.status_code = status_code


class MissingReplayEntryError(LlmError):
    """The replay file has no entry for the request fingerprint."""

    def __init__(self, fingerprint: str) -> None:
        super().__init__(f"no replay entry for fingerprint {fingerprint}")
        self.fingerprint = fingerprint


class NoRuleMatchedError(LlmError):
    """No scripted rule matched the request."""


class ReplayIoError(LlmError):
    """A replay file could not be read or written."""


# --- pipeline stages ---------------------------------------------------------

class PipelineError(CrossRagError):
    """A pipeline stage failed; `stage` names the failing stage."""

    stage = "pipeline"

    def __init__(self, message: str, cause: Exception | None = None) -> None:
        super().__init__(message)
        self.cause = cause


class RoutingFailedError(PipelineError):
    stage = "routing"


class RetrievalFailedError(PipelineError):
    stage = "retrieval"


class SqlGenerationFailedError(PipelineError):
    stage = "retrieval"


class SynthesisFailedError(PipelineError):
    stage = "synthesis"


class EmptyContextError(CrossRagError):
    """Synthesis was asked to build a prompt over an empty context."""


# --- metrics -----------------------------------------------------------------

class EmptyReferenceError(CrossRagError):
    """The reference answer is empty, so the measure is undefined."""


# --- harness / configuration --------------------------------------------------

class NoRecordsError(CrossRagError):
    """Aggregation was asked to summarize zero run records."""


class ScenarioError(CrossRagError):
    """A scenario file is malformed or inconsistent with the registry."""


class RecordsError(CrossRagError):
    """A run-records file contains a line that is not a valid record."""


class ConfigError(CrossRagError):
    """The configuration document is malformed or references missing paths."""
