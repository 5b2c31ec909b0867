"""Task-to-task transferability scores.

Three constructions read the prompt weight matrix ``[e_1 .. e_N]`` directly:

* feature  - cosine of the token-mean vectors, ``cos(mean_i e_i^1, mean_j e_j^2)``
* unigram  - cosine of the per-token feature means, a length-N vector per task
* max      - for each target token, the best cosine against any source token,
             averaged over target tokens:
             ``(1/N_tgt) * sum_j max_i cos(e_i^src, e_j^tgt)``

``max`` is deliberately asymmetric (max over source tokens, mean over target
tokens). It is implemented twice: an optimized path (row-normalize, one dense
matrix product, row-wise max) and a brute-force double loop that serves as
the oracle in tests. Both accumulate in float64 and agree within 1e-9.

All constructions read the raw prompt weights: matrices are never re-centered
or re-normalized before the cosine (beyond the per-token L2 normalization
that defines ``max``).

The remaining methods never touch prompt weights: sentence-vector cosine,
training-set size, and a seeded random permutation.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptySourceSet,
    EncoderMismatch,
    InvariantViolation,
    ZeroRow,
    ZeroVector,
)
from .rng import SplitMix64
from .tensor_io import PromptMatrix, Ranking, SentenceEmbeddingVec, TaskRecord

_CLAMP_SLACK = 1e-12


@dataclass(frozen=True)
class TaskEmbedding:
    """Fixed-size vector summarizing one task's prompt matrix."""

    task_id: str
    kind: str  # "feature" (length d) | "unigram" (length N)
    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise InvariantViolation(f"embedding for {self.task_id!r}: non-finite entry")
        object.__setattr__(self, "data", arr)


@dataclass(frozen=True)
class SimilarityScore:
    source_id: str
    target_id: str
    method_id: str
    value: float


def feature_embedding(m: PromptMatrix) -> TaskEmbedding:
    """Mean over prompt tokens: a vector in R^d."""
    return TaskEmbedding(m.task_id, "feature", m.data.mean(axis=0))


def unigram_embedding(m: PromptMatrix) -> TaskEmbedding:
    """Mean over feature dimensions per token: a vector in R^N."""
    return TaskEmbedding(m.task_id, "unigram", m.data.mean(axis=1))


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity, clamped into [-1, 1].

    The dot product and the norm product are both exactly symmetric in
    floating point, so cos(a, b) == cos(b, a) bit for bit.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape[0] != b.shape[0]:
        raise DimensionMismatch(f"cosine: lengths {a.shape[0]} vs {b.shape[0]}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine undefined for a zero-norm vector")
    v = float(np.dot(a, b)) / (na * nb)
    if v > 1.0 + _CLAMP_SLACK or v < -1.0 - _CLAMP_SLACK:
        raise InvariantViolation(f"cosine {v} outside [-1, 1] beyond numerical slack")
    return min(1.0, max(-1.0, v))


def feature_similarity(src: PromptMatrix, tgt: PromptMatrix) -> SimilarityScore:
    if src.cols != tgt.cols:
        raise DimensionMismatch(
            f"feature: {src.task_id!r} has d={src.cols}, {tgt.task_id!r} has d={tgt.cols}"
        )
    v = cosine(feature_embedding(src).data, feature_embedding(tgt).data)
    return SimilarityScore(src.task_id, tgt.task_id, "feature", v)


def unigram_similarity(src: PromptMatrix, tgt: PromptMatrix) -> SimilarityScore:
    if src.rows != tgt.rows:
        raise DimensionMismatch(
            f"unigram: {src.task_id!r} has N={src.rows}, {tgt.task_id!r} has N={tgt.rows}"
        )
    v = cosine(unigram_embedding(src).data, unigram_embedding(tgt).data)
    return SimilarityScore(src.task_id, tgt.task_id, "unigram", v)


def normalized_rows(m: PromptMatrix) -> np.ndarray:
    """L2-normalize every prompt token; zero-norm rows are an error, never skipped."""
    norms = np.linalg.norm(m.data, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ZeroRow(f"prompt matrix {m.task_id!r}: row {int(zero[0])} has zero norm")
    return m.data / norms[:, None]


def max_directional(src_unit: np.ndarray, tgt_unit: np.ndarray) -> float:
    """Optimized max-similarity path on pre-normalized rows.

    One gram matrix, max over the source axis, mean over target tokens.
    """
    gram = tgt_unit @ src_unit.T  # (N_tgt, N_src)
    np.clip(gram, -1.0, 1.0, out=gram)
    return float(gram.max(axis=1).mean())


def max_similarity(
    src: PromptMatrix, tgt: PromptMatrix, symmetrize: bool = False
) -> SimilarityScore:
    """Mean over target tokens of the best source-token cosine.

    With ``symmetrize=True`` the score is the mean of both directions
    instead of the canonical source->target orientation.
    """
    if src.cols != tgt.cols:
        raise DimensionMismatch(
            f"max: {src.task_id!r} has d={src.cols}, {tgt.task_id!r} has d={tgt.cols}"
        )
    su, tu = normalized_rows(src), normalized_rows(tgt)
    v = max_directional(su, tu)
    if symmetrize:
        v = 0.5 * (v + max_directional(tu, su))
    return SimilarityScore(src.task_id, tgt.task_id, "max", v)


def max_similarity_bruteforce(
    src: PromptMatrix, tgt: PromptMatrix, symmetrize: bool = False
) -> SimilarityScore:
    """Oracle path: explicit double loop over token pairs, one cosine each."""
    if src.cols != tgt.cols:
        raise DimensionMismatch(
            f"max: {src.task_id!r} has d={src.cols}, {tgt.task_id!r} has d={tgt.cols}"
        )
    for m in (src, tgt):
        norms = np.linalg.norm(m.data, axis=1)
        zero = np.flatnonzero(norms == 0.0)
        if zero.size:
            raise ZeroRow(f"prompt matrix {m.task_id!r}: row {int(zero[0])} has zero norm")

    def one_direction(a: PromptMatrix, b: PromptMatrix) -> float:
        best_per_token = []
        for j in range(b.rows):
            best = -2.0
            for i in range(a.rows):
                c = cosine(a.data[i], b.data[j])
                if c > best:
                    best = c
            best_per_token.append(best)
        return float(np.mean(best_per_token))

    v = one_direction(src, tgt)
    if symmetrize:
        v = 0.5 * (v + one_direction(tgt, src))
    return SimilarityScore(src.task_id, tgt.task_id, "max", v)


def all_pairs_max_similarity(
    sources: Mapping[str, PromptMatrix],
    targets: Mapping[str, PromptMatrix],
    workers: int = 1,
    symmetrize: bool = False,
) -> dict[tuple[str, str], float]:
    """Max similarity for every (source, target) pair, optionally in parallel.

    Rows are normalized once per matrix; each pair is then a single dense
    product. Pairs are dispatched to a thread pool in interleaved chunks
    (the matmul releases the GIL); every pair is computed independently, so
    the result is keyed deterministically regardless of worker count or
    completion order.
    """
    src_units = {sid: normalized_rows(m) for sid, m in sorted(sources.items())}
    tgt_units = {tid: normalized_rows(m) for tid, m in sorted(targets.items())}
    pairs = [(sid, tid) for sid in sorted(src_units) for tid in sorted(tgt_units)]

    def compute(pair: tuple[str, str]) -> float:
        sid, tid = pair
        v = max_directional(src_units[sid], tgt_units[tid])
        if symmetrize:
            v = 0.5 * (v + max_directional(tgt_units[tid], src_units[sid]))
        return v

    if workers <= 1:
        return dict(zip(pairs, (compute(p) for p in pairs)))

    nchunks = min(len(pairs), workers * 4)
    chunks = [pairs[i::nchunks] for i in range(nchunks)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        chunk_values = list(pool.map(lambda c: [compute(p) for p in c], chunks))
    table: dict[tuple[str, str], float] = {}
    for chunk, values in zip(chunks, chunk_values):
        table.update(zip(chunk, values))
    return {p: table[p] for p in pairs}


def semb_similarity(
    src: SentenceEmbeddingVec, tgt: SentenceEmbeddingVec
) -> SimilarityScore:
    if src.encoder_id != tgt.encoder_id:
        raise EncoderMismatch(
            f"semb: {src.task_id!r} uses {src.encoder_id!r}, "
            f"{tgt.task_id!r} uses {tgt.encoder_id!r}"
        )
    if src.dim != tgt.dim:
        raise DimensionMismatch(f"semb: dims {src.dim} vs {tgt.dim}")
    v = cosine(src.data, tgt.data)
    return SimilarityScore(src.task_id, tgt.task_id, f"semb:{src.encoder_id}", v)


def size_score(t: TaskRecord) -> float:
    """Training-set size as the transferability score (larger ranks higher)."""
    if t.train_size <= 0:
        raise InvariantViolation(
            f"task {t.task_id!r}: size method needs train_size > 0, got {t.train_size}"
        )
    return float(t.train_size)


def random_ranking(
    sources: Sequence[TaskRecord | str], rng_seed: int, target_id: str = ""
) -> Ranking:
    """Uniform random permutation of the sources, reproducible from the seed.

    Input order does not matter: ids are canonicalized (sorted ascending)
    before shuffling, so only the seed determines the permutation. Scores
    are synthetic descending ranks, not similarities.
    """
    ids = sorted(t if isinstance(t, str) else t.task_id for t in sources)
    if not ids:
        raise EmptySourceSet("random ranking needs at least one source")
    if len(set(ids)) != len(ids):
        raise InvariantViolation("duplicate source ids in random ranking input")
    SplitMix64(rng_seed).shuffle(ids)
    n = len(ids)
    items = tuple((sid, float(n - pos)) for pos, sid in enumerate(ids))
    return Ranking(target_id=target_id, method_id="random", items=items)
