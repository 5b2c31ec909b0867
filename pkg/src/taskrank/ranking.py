"""Ranking construction and evaluation metrics.

Ground truth for a target task is the source order induced by measured
transfer performance (averaged over transfer seeds by default). Predictions
are scored with two metrics:

* nDCG: DCG(predicted) / DCG(ideal), where
  ``DCG(R) = sum_i (2**rel_i - 1) / log2(i + 1)`` over ranks i = 1..p and the
  relevance of a source is its averaged target performance (roughly 0..100).
* Regret@k: the percentage shortfall of the best transfer score found in the
  top-k predictions against the best achievable score,
  ``100 * (best_overall - best_in_top_k) / best_overall``.

Relevance enters ``2**rel``, so values above 1023 are a hard error (float64
would overflow to inf and silently corrupt comparisons) and negative
measured metrics are clamped to zero with a recorded warning so nDCG stays
inside [0, 1].

The random baseline has no single ranking worth scoring; its reported
figures are Monte Carlo means over many seeded permutations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    BadK,
    DegenerateIdeal,
    DegenerateRelevance,
    IncompleteResults,
    NegativeRelevance,
    NonPositiveBaseline,
    RelevanceOverflow,
    SourceSetMismatch,
)
from .rng import SplitMix64
from .tensor_io import Ranking, TransferTable

MAX_RELEVANCE = 1023.0

#: Transfer-seed aggregation: "mean" averages over seeds, an int picks one.
MEAN_OVER_SEEDS = "mean"


@dataclass(frozen=True)
class RelevanceVector:
    """Per-source relevance for one target: averaged transfer performance."""

    target_id: str
    rel: Mapping[str, float]
    clamped: tuple[str, ...] = ()  # sources whose negative scores were clamped to 0

    def in_order(self, ranking: Ranking) -> list[float]:
        return [self.rel[sid] for sid in ranking.source_ids()]


def relative_transfer(m_st: float, m_t: float) -> float:
    """Percent gain of a transfer score over the no-transfer baseline."""
    if m_t <= 0.0:
        raise NonPositiveBaseline(f"baseline must be > 0, got {m_t}")
    return 100.0 * (m_st - m_t) / m_t


def build_relevance(
    table: TransferTable,
    target_id: str,
    source_ids: Sequence[str],
    seed_policy: int | str = MEAN_OVER_SEEDS,
) -> RelevanceVector:
    """Relevance per source under the seed policy, clamping negatives to 0."""
    rel: dict[str, float] = {}
    clamped: list[str] = []
    for sid in source_ids:
        if seed_policy == MEAN_OVER_SEEDS:
            score = table.mean_score(sid, target_id)
        else:
            score = table.score(sid, target_id, int(seed_policy))
        if score > MAX_RELEVANCE:
            raise RelevanceOverflow(
                f"relevance {score} for ({sid!r} -> {target_id!r}) exceeds "
                f"{MAX_RELEVANCE}; 2**rel would overflow"
            )
        if score < 0.0:
            clamped.append(sid)
            score = 0.0
        rel[sid] = float(score)
    return RelevanceVector(target_id, rel, tuple(sorted(clamped)))


def ground_truth_ranking(
    table: TransferTable,
    target_id: str,
    source_ids: Sequence[str],
    seed_policy: int | str = MEAN_OVER_SEEDS,
) -> tuple[Ranking, RelevanceVector]:
    """Sources sorted by measured transfer performance (ties by task id)."""
    rel = build_relevance(table, target_id, source_ids, seed_policy)
    ranking = Ranking.from_scores(target_id, "ground_truth", rel.rel)
    return ranking, rel


def dcg(rels_in_rank_order: Sequence[float], p: int) -> float:
    """Discounted cumulative gain over the first p ranks."""
    if p < 0 or p > len(rels_in_rank_order):
        raise BadK(f"p={p} outside [0, {len(rels_in_rank_order)}]")
    total = 0.0
    for i, rel in enumerate(rels_in_rank_order[:p], start=1):
        if rel < 0.0:
            raise NegativeRelevance(f"relevance {rel} at rank {i} is negative")
        if rel > MAX_RELEVANCE:
            raise RelevanceOverflow(f"relevance {rel} at rank {i} exceeds {MAX_RELEVANCE}")
        total += (2.0 ** rel - 1.0) / math.log2(i + 1)
    return total


def ndcg(
    pred: Ranking, truth: Ranking, rel: RelevanceVector, p: int | None = None
) -> float:
    """DCG of the prediction over DCG of the ground truth, in [0, 1]."""
    pred_set = set(pred.source_ids())
    truth_set = set(truth.source_ids())
    if pred_set != truth_set:
        raise SourceSetMismatch(
            f"prediction and truth cover different sources for {rel.target_id!r}: "
            f"{sorted(pred_set ^ truth_set)}"
        )
    if p is None:
        p = len(truth.items)
    ideal = dcg(rel.in_order(truth), p)
    if ideal == 0.0:
        raise DegenerateIdeal(f"all relevances zero for {rel.target_id!r}")
    value = dcg(rel.in_order(pred), p) / ideal
    return min(1.0, value)


def regret_at_k(pred: Ranking, rel: RelevanceVector, k: int) -> float:
    """Percent shortfall of the best top-k pick against the best possible."""
    n = len(pred.items)
    if k < 1 or k > n:
        raise BadK(f"k={k} outside [1, {n}]")
    missing = [sid for sid in pred.source_ids() if sid not in rel.rel]
    if missing:
        raise SourceSetMismatch(f"prediction covers sources without relevance: {missing}")
    best = max(rel.rel[sid] for sid in pred.source_ids())
    if best <= 0.0:
        raise DegenerateRelevance(f"max relevance is {best}, regret undefined")
    best_top_k = max(rel.rel[sid] for sid in pred.top(k))
    return 100.0 * (best - best_top_k) / best


@dataclass(frozen=True)
class GainResult:
    """Best-of-top-k transfer outcome against the no-transfer baseline."""

    abs_gain: float
    rel_gain_pct: float
    score: float


def best_of_top_k(
    pred: Ranking, table: TransferTable, target_id: str, k: int
) -> GainResult:
    """Best seed-averaged transfer score among the top-k predicted sources.

    k larger than the source count is capped; negative gains are reported
    as-is so negative transfer stays visible.
    """
    if k < 1:
        raise BadK(f"k={k} must be >= 1")
    k = min(k, len(pred.items))
    baseline = table.baseline_mean(target_id)
    score = max(table.mean_score(sid, target_id) for sid in pred.top(k))
    return GainResult(
        abs_gain=score - baseline,
        rel_gain_pct=relative_transfer(score, baseline),
        score=score,
    )


# ---------------------------------------------------------------------------
# Monte Carlo evaluation of the random baseline
# ---------------------------------------------------------------------------

def _dcg_vector(rel_matrix: np.ndarray) -> np.ndarray:
    """Row-wise DCG of a (trials, n) matrix of relevances in rank order."""
    n = rel_matrix.shape[1]
    discounts = np.log2(np.arange(2, n + 2, dtype=np.float64))
    gains = np.exp2(rel_matrix) - 1.0
    return (gains / discounts).sum(axis=1)


def monte_carlo_random_metrics(
    rel: RelevanceVector,
    k_values: Sequence[int],
    trials: int,
    rng_seed: int,
    p: int | None = None,
) -> tuple[float, dict[int, float]]:
    """Expected nDCG and Regret@k of a uniformly random ranking.

    Permutations come from the package PRNG seeded with ``rng_seed``; the
    same seed reproduces the same means exactly.
    """
    ids = sorted(rel.rel)
    n = len(ids)
    if p is None:
        p = n
    for k in k_values:
        if k < 1 or k > n:
            raise BadK(f"k={k} outside [1, {n}]")
    values = np.array([rel.rel[sid] for sid in ids], dtype=np.float64)
    if values.max() <= 0.0:
        raise DegenerateRelevance(f"max relevance is {values.max()}, regret undefined")
    if np.any(values > MAX_RELEVANCE):
        raise RelevanceOverflow(f"relevance exceeds {MAX_RELEVANCE}")

    gen = SplitMix64(rng_seed)
    perms = np.empty((trials, n), dtype=np.intp)
    order = list(range(n))
    for t in range(trials):
        perm = order.copy()
        gen.shuffle(perm)
        perms[t] = perm
    permuted = values[perms]  # (trials, n) relevance in predicted-rank order

    ideal = dcg(sorted(values, reverse=True), p)
    if ideal == 0.0:
        raise DegenerateIdeal(f"all relevances zero for {rel.target_id!r}")
    ndcg_mean = float(np.minimum(_dcg_vector(permuted[:, :p]) / ideal, 1.0).mean())

    best = float(values.max())
    regret_means: dict[int, float] = {}
    for k in k_values:
        best_top_k = permuted[:, :k].max(axis=1)
        regret_means[k] = float((100.0 * (best - best_top_k) / best).mean())
    return ndcg_mean, regret_means


def monte_carlo_random_gains(
    table: TransferTable,
    target_id: str,
    source_ids: Sequence[str],
    k: int,
    trials: int,
    rng_seed: int,
) -> GainResult:
    """Expected best-of-top-k gains of a uniformly random ranking."""
    if k < 1:
        raise BadK(f"k={k} must be >= 1")
    ids = sorted(source_ids)
    n = len(ids)
    k = min(k, n)
    baseline = table.baseline_mean(target_id)
    scores = np.array([table.mean_score(sid, target_id) for sid in ids])
    gen = SplitMix64(rng_seed)
    order = list(range(n))
    tops = np.empty(trials, dtype=np.float64)
    for t in range(trials):
        perm = order.copy()
        gen.shuffle(perm)
        tops[t] = scores[perm[:k]].max()
    score = float(tops.mean())
    return GainResult(
        abs_gain=score - baseline,
        rel_gain_pct=relative_transfer(score, baseline),
        score=score,
    )


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricCell:
    """nDCG plus Regret@k values for one (target, method) evaluation."""

    ndcg: float
    regret_at_k: Mapping[int, float]


@dataclass(frozen=True)
class EvalReport:
    """Per-target, per-category, and overall metric aggregates."""

    per_target: Mapping[tuple[str, str], MetricCell]
    per_category: Mapping[tuple[str, str], MetricCell]
    overall: Mapping[str, MetricCell]
    transfer_gains: Mapping[tuple[str, int], GainResult]
    baseline_mean: float
    k_values: tuple[int, ...]
    p: int
    monte_carlo_trials: int
    master_seed: int
    warnings: tuple[str, ...] = field(default_factory=tuple)

    def to_json_dict(self) -> dict:
        def cell(c: MetricCell) -> dict:
            return {
                "ndcg": c.ndcg,
                "regret_at_k": {str(k): v for k, v in sorted(c.regret_at_k.items())},
            }

        return {
            "per_target": {
                tid: {
                    mid: cell(c)
                    for (t, mid), c in sorted(self.per_target.items())
                    if t == tid
                }
                for tid in sorted({t for t, _ in self.per_target})
            },
            "per_category": {
                cat: {
                    mid: cell(c)
                    for (c2, mid), c in sorted(self.per_category.items())
                    if c2 == cat
                }
                for cat in sorted({c for c, _ in self.per_category})
            },
            "overall": {mid: cell(c) for mid, c in sorted(self.overall.items())},
            "transfer_gains": {
                mid: {
                    str(k): {
                        "abs_gain": g.abs_gain,
                        "rel_gain_pct": g.rel_gain_pct,
                        "avg_score": g.score,
                    }
                    for (m, k), g in sorted(self.transfer_gains.items())
                    if m == mid
                }
                for mid in sorted({m for m, _ in self.transfer_gains})
            },
            "no_transfer_avg_score": self.baseline_mean,
            "k_values": list(self.k_values),
            "p": self.p,
            "monte_carlo": {
                "trials": self.monte_carlo_trials,
                "master_seed": self.master_seed,
            },
            "warnings": list(self.warnings),
        }


def _mean_cell(cells: Iterable[MetricCell], k_values: Sequence[int]) -> MetricCell:
    cells = list(cells)
    return MetricCell(
        ndcg=float(np.mean([c.ndcg for c in cells])),
        regret_at_k={
            k: float(np.mean([c.regret_at_k[k] for c in cells])) for k in k_values
        },
    )


def aggregate_report(
    per_target: Mapping[tuple[str, str], MetricCell],
    target_categories: Mapping[str, str],
    methods: Sequence[str],
    k_values: Sequence[int],
    transfer_gains: Mapping[tuple[str, int], GainResult],
    baseline_mean: float,
    p: int,
    monte_carlo_trials: int,
    master_seed: int,
    warnings: Sequence[str] = (),
) -> EvalReport:
    """Unweighted arithmetic means per category and over all targets."""
    targets = sorted(target_categories)
    missing = [
        (tid, mid)
        for tid in targets
        for mid in methods
        if (tid, mid) not in per_target
    ]
    if missing:
        raise IncompleteResults(f"missing per-target cells: {missing}")

    per_category: dict[tuple[str, str], MetricCell] = {}
    categories = sorted(set(target_categories.values()))
    for cat in categories:
        members = [t for t in targets if target_categories[t] == cat]
        for mid in methods:
            per_category[(cat, mid)] = _mean_cell(
                (per_target[(t, mid)] for t in members), k_values
            )
    overall = {
        mid: _mean_cell((per_target[(t, mid)] for t in targets), k_values)
        for mid in methods
    }
    return EvalReport(
        per_target=dict(per_target),
        per_category=per_category,
        overall=overall,
        transfer_gains=dict(transfer_gains),
        baseline_mean=baseline_mean,
        k_values=tuple(k_values),
        p=p,
        monte_carlo_trials=monte_carlo_trials,
        master_seed=master_seed,
        warnings=tuple(warnings),
    )
