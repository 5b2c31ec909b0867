"""taskrank: predict intermediate-task transferability from soft-prompt weights.

Builds task embeddings out of prompt weight matrices, ranks candidate source
tasks per target with several selection methods, and scores the predicted
rankings against measured transfer performance with nDCG and Regret@k.
"""

from .errors import TaskRankError
from .pipeline import RunConfig, Workspace, evaluate, load_workspace, run_eval, run_rank
from .ranking import (
    EvalReport,
    GainResult,
    MetricCell,
    RelevanceVector,
    best_of_top_k,
    dcg,
    ground_truth_ranking,
    ndcg,
    regret_at_k,
    relative_transfer,
)
from .similarity import (
    SimilarityScore,
    TaskEmbedding,
    cosine,
    feature_embedding,
    feature_similarity,
    max_similarity,
    max_similarity_bruteforce,
    random_ranking,
    semb_similarity,
    size_score,
    unigram_embedding,
    unigram_similarity,
)
from .tensor_io import (
    Manifest,
    PromptMatrix,
    Ranking,
    SentenceEmbeddingVec,
    TaskRecord,
    TransferTable,
    load_manifest,
    load_prompt_matrix,
    load_semb_vector,
    load_transfer_table,
    save_prompt_matrix,
    save_semb_vector,
)

__version__ = "0.1.0"

__all__ = [
    "EvalReport",
    "GainResult",
    "Manifest",
    "MetricCell",
    "PromptMatrix",
    "Ranking",
    "RelevanceVector",
    "RunConfig",
    "SentenceEmbeddingVec",
    "SimilarityScore",
    "TaskEmbedding",
    "TaskRankError",
    "TaskRecord",
    "TransferTable",
    "Workspace",
    "best_of_top_k",
    "cosine",
    "dcg",
    "evaluate",
    "feature_embedding",
    "feature_similarity",
    "ground_truth_ranking",
    "load_manifest",
    "load_prompt_matrix",
    "load_semb_vector",
    "load_transfer_table",
    "load_workspace",
    "max_similarity",
    "max_similarity_bruteforce",
    "ndcg",
    "random_ranking",
    "regret_at_k",
    "relative_transfer",
    "run_eval",
    "run_rank",
    "save_prompt_matrix",
    "save_semb_vector",
    "semb_similarity",
    "size_score",
    "unigram_embedding",
    "unigram_similarity",
]
