"""Exception hierarchy.

Every failure mode raised by this package derives from :class:`TaskRankError`.
The CLI maps exception categories onto exit codes: validation problems exit
with 2, data errors encountered mid-run exit with 3, and anything that
indicates an internal invariant breach exits with 4.
"""

from __future__ import annotations


class TaskRankError(Exception):
    """Base class for all errors raised by taskrank."""


# --- tensor / artifact loading -------------------------------------------

class BadMagic(TaskRankError):
    """File does not start with the PTNS magic bytes."""


class VersionUnsupported(TaskRankError):
    """PTNS version field is not one we can read."""


class TruncatedPayload(TaskRankError):
    """File ended before the declared header or tensor payload."""


class NonFiniteEntry(TaskRankError):
    """Tensor payload contains NaN or Inf."""


class IoFailure(TaskRankError):
    """Underlying OS-level read/write failure."""


class InvariantViolation(TaskRankError):
    """A domain-type invariant does not hold (internal breach: exit code 4)."""


class DuplicateTaskId(TaskRankError):
    """Manifest declares the same task id twice."""


class MissingArtifact(TaskRankError):
    """A referenced tensor/vector file is absent or unresolvable."""


class SchemaError(TaskRankError):
    """Manifest / transfer-table / header content violates the schema."""


class NonFiniteScore(TaskRankError):
    """Transfer table contains a NaN or Inf score."""


# --- similarity kernels ----------------------------------------------------

class DimensionMismatch(TaskRankError):
    """Operands disagree on vector/matrix dimensions."""


class ZeroVector(TaskRankError):
    """Cosine similarity is undefined for a zero-norm vector."""


class ZeroRow(TaskRankError):
    """A prompt matrix row has zero norm (corrupted checkpoint)."""


class EncoderMismatch(TaskRankError):
    """Sentence vectors come from different encoders."""


class EmptySourceSet(TaskRankError):
    """An operation needs at least one source task."""


# --- ranking metrics ---------------------------------------------------------

class MissingEntry(TaskRankError):
    """Transfer table lacks a required (source, target, seed) entry."""


class NonPositiveBaseline(TaskRankError):
    """Relative transfer needs a strictly positive no-transfer baseline."""


class RelevanceOverflow(TaskRankError):
    """A relevance value above 1023 would overflow 2**rel in float64."""


class NegativeRelevance(TaskRankError):
    """A negative relevance reached DCG with clamping disabled."""


class SourceSetMismatch(TaskRankError):
    """Predicted and ground-truth rankings cover different source sets."""


class DegenerateIdeal(TaskRankError):
    """Ideal DCG is zero (all relevances zero), nDCG undefined."""


class BadK(TaskRankError):
    """k is outside the valid range for the operation."""


class DegenerateRelevance(TaskRankError):
    """All relevances are non-positive, regret undefined."""


class IncompleteResults(TaskRankError):
    """Aggregation is missing per-target cells."""


# --- cli / reporting -------------------------------------------------------

class MissingMetrics(TaskRankError):
    """report was asked to render metrics that were never computed."""


class ConfigError(TaskRankError):
    """Run configuration is malformed or self-contradictory."""
