"""Typed error hierarchy shared by every subsystem.

Each error class doubles as a wire-level error code: the service layer
reports ``type(exc).__name__`` in its structured error responses, so class
names are part of the public contract and must stay stable.
"""

from __future__ import annotations


class CxreportError(Exception):
    """Base class for all domain errors raised by this package."""

    @property
    def error_code(self) -> str:
        return type(self).__name__


# --- file handling / data model ---

class IoError(CxreportError):
    """Underlying OS-level read or write failure."""


class MalformedFile(CxreportError):
    """File exists but does not satisfy its documented schema or invariants."""


class DuplicateId(CxreportError):
    """An identifier that must be unique appears more than once."""


class InvalidSpec(CxreportError):
    """Synthetic dataset parameters violate their preconditions."""


# --- numeric pipeline ---

class DimensionMismatch(CxreportError):
    """Vector or matrix dimensions do not line up."""


class ZeroNormVector(CxreportError):
    """Cosine similarity requested against a zero-norm vector."""


class EmptyInput(CxreportError):
    """Operation requires at least one element."""


class NoTrainingData(CxreportError):
    """Training split is empty or carries no labels."""


class NonFiniteLoss(CxreportError):
    """Training loss became NaN/Inf or failed to decrease; learning rate is bad."""


class IndexOutOfRange(CxreportError):
    """Concept index outside the bottleneck width."""


class ValueOutOfRange(CxreportError):
    """A value escaped its documented closed range."""


class InvalidK(CxreportError):
    """Ablation/correction size k outside [0, N]."""


class MissingOracleConcepts(CxreportError):
    """Correction requested on a case without ground-truth concept values."""


# --- vector store ---

class InvalidWindow(CxreportError):
    """Chunking window/overlap combination is unusable."""


class DuplicateChunkId(CxreportError):
    """Chunk id already present in the store."""


class EmptyStore(CxreportError):
    """Retrieval against a store with no chunks."""


# --- agents / backends ---

class BackendError(CxreportError):
    """Chat or embedding backend failed (transport, HTTP status, timeout)."""


class UnparseableResponse(CxreportError):
    """Backend response does not match the required strict format."""


class InsufficientConcepts(CxreportError):
    """Concept discovery produced fewer distinct descriptors than requested."""


class MalformedAction(CxreportError):
    """Agent emitted something other than the documented tool grammar."""


class NoRetrievalPerformed(CxreportError):
    """Agent finished without ever obtaining retrieval evidence."""


class MissingSection(CxreportError):
    """Writer response lacks one of the required report sections."""


class DanglingCitation(CxreportError):
    """Report cites a chunk id absent from the retrieval it was grounded on."""


class StageError(CxreportError):
    """Wraps an error raised inside a named pipeline stage."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause

    @property
    def error_code(self) -> str:
        if isinstance(self.cause, CxreportError):
            return self.cause.error_code
        return type(self.cause).__name__


# --- evaluation ---

class DegenerateInput(CxreportError):
    """Fewer than two clusters, or too few points for the computation."""


class CoincidentCentroids(CxreportError):
    """Two distinct clusters share a centroid; index undefined."""


class ZeroWithinDispersion(CxreportError):
    """Within-cluster sum of squares is zero; ratio undefined."""


class ZeroDiameter(CxreportError):
    """Every cluster has zero diameter; Dunn index undefined."""


class UnparseableVerdict(CxreportError):
    """Judge/classifier response is not the required strict JSON."""


class ScoreOutOfRange(CxreportError):
    """Judge emitted a score outside [0, 1]."""


# --- service / config ---

class ConfigError(CxreportError):
    """Application configuration is missing, malformed, or inconsistent."""


class UnknownCase(CxreportError):
    """A request referenced a case id not present in the loaded dataset."""
