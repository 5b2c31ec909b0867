"""Synthetic planted-structure workspace generator.

Builds a self-contained evaluation workspace (prompt tensors, sentence
vectors, manifest, transfer table) whose correct ranking is known by
construction, so the full pipeline can be verified end to end without any
trained checkpoints.

Construction: every source task gets its own disjoint slice of the feature
dimensions, with prompt tokens drawn Gaussian inside that slice, so tokens
of different sources are exactly orthogonal. Each target is assembled from
blocks of source tokens: the designated source contributes the largest
block, the remaining sources contribute strictly decreasing block sizes.
Token-wise max similarity between a source and a target is then exactly
(block size / token count) at zero noise, so the planted block order is the
provable ranking. The transfer table assigns each (source, target) a score
that increases with the planted block size, which makes the ground-truth
ranking coincide with the planted one. Optional Gaussian noise (norm sigma
relative to each token's norm) perturbs the targets to make recovery
non-trivial.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .tensor_io import (
    CATEGORIES,
    PromptMatrix,
    SentenceEmbeddingVec,
    save_prompt_matrix,
    save_semb_vector,
)

PROMPT_SEED = 42  # training seed recorded in generated tensor headers
BASE_SCORE = 40.0  # transfer-table score floor; planted weights add to it


@dataclass(frozen=True)
class FixtureSpec:
    """Parameters of a generated workspace."""

    out_dir: Path
    n_sources: int = 13
    n_targets: int = 10
    rows: int = 100
    cols: int = 768
    noise: float = 0.0
    seed: int = 0xF1D0
    step: int = 30000
    transfer_seeds: tuple[int, ...] = (112, 28, 52)
    semb_dim: int = 32
    encoder_id: str = "stub"


def planted_weights(n_sources: int, rows: int) -> list[int]:
    """Distinct positive block sizes summing to ``rows``, largest first."""
    base = list(range(n_sources, 0, -1))
    remainder = rows - sum(base)
    if remainder < 0:
        raise ConfigError(
            f"rows={rows} cannot fit {n_sources} distinct block sizes "
            f"(needs >= {sum(base)})"
        )
    base[0] += remainder
    return base


def _task_ids(prefix: str, count: int) -> list[str]:
    width = len(str(count - 1)) if count > 1 else 1
    return [f"{prefix}{i:0{width}d}" for i in range(count)]


def generate_fixture(spec: FixtureSpec) -> dict:
    """Write the workspace and return its metadata dict."""
    if spec.cols < spec.n_sources:
        raise ConfigError(
            f"cols={spec.cols} must be >= n_sources={spec.n_sources} "
            f"for disjoint feature slices"
        )
    out = Path(spec.out_dir)
    tensor_dir = out / "tensors"
    semb_dir = out / "semb"
    tensor_dir.mkdir(parents=True, exist_ok=True)
    semb_dir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(spec.seed)
    source_ids = _task_ids("src", spec.n_sources)
    target_ids = _task_ids("tgt", spec.n_targets)
    weights = planted_weights(spec.n_sources, spec.rows)
    slice_width = spec.cols // spec.n_sources

    # sources: Gaussian tokens inside a private feature slice
    source_data: dict[str, np.ndarray] = {}
    for idx, sid in enumerate(source_ids):
        mat = np.zeros((spec.rows, spec.cols))
        lo = idx * slice_width
        mat[:, lo : lo + slice_width] = rng.standard_normal((spec.rows, slice_width))
        source_data[sid] = mat

    # targets: concatenated source blocks, then optional noise
    planted: dict[str, list[str]] = {}
    target_data: dict[str, np.ndarray] = {}
    for j, tid in enumerate(target_ids):
        order = [source_ids[(j + r) % spec.n_sources] for r in range(spec.n_sources)]
        planted[tid] = order
        blocks = [source_data[sid][:w] for sid, w in zip(order, weights)]
        mat = np.concatenate(blocks, axis=0)
        if spec.noise > 0.0:
            g = rng.standard_normal(mat.shape)
            g *= (spec.noise * np.linalg.norm(mat, axis=1) / np.linalg.norm(g, axis=1))[:, None]
            mat = mat + g
        target_data[tid] = mat

    artifacts = []
    for tid_all, mat in {**source_data, **target_data}.items():
        rel = f"tensors/{tid_all}_s{PROMPT_SEED}_t{spec.step}.ptns"
        save_prompt_matrix(
            PromptMatrix(tid_all, PROMPT_SEED, spec.step, spec.rows, spec.cols, mat),
            out / rel,
        )
        artifacts.append(
            {
                "task_id": tid_all,
                "kind": "prompt",
                "seed": PROMPT_SEED,
                "step": spec.step,
                "path": rel,
            }
        )
        vec = rng.standard_normal(spec.semb_dim)
        vec /= np.linalg.norm(vec)
        rel_semb = f"semb/{tid_all}_{spec.encoder_id}.ptns"
        save_semb_vector(
            SentenceEmbeddingVec(tid_all, spec.encoder_id, spec.semb_dim, vec),
            out / rel_semb,
        )
        artifacts.append(
            {
                "task_id": tid_all,
                "kind": "semb",
                "encoder_id": spec.encoder_id,
                "path": rel_semb,
            }
        )

    tasks = []
    for i, sid in enumerate(source_ids):
        tasks.append(
            {
                "id": sid,
                "name": sid.upper(),
                "category": CATEGORIES[i % len(CATEGORIES)],
                "train_size": 25000 * (spec.n_sources - i),
                "role": "Source",
            }
        )
    for j, tid in enumerate(target_ids):
        tasks.append(
            {
                "id": tid,
                "name": tid.upper(),
                "category": CATEGORIES[j % len(CATEGORIES)],
                "train_size": 250 * (j + 1),
                "role": "Target",
            }
        )
    manifest = {"tasks": tasks, "artifacts": artifacts}
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", "utf-8"
    )

    # transfer table: score grows with the planted block size; symmetric
    # per-seed offsets keep the seed-mean at the planted value
    m = len(spec.transfer_seeds)
    offsets = [0.05 * (i - (m - 1) / 2.0) for i in range(m)]
    lines = ["source,target,seed,score"]
    for tid in target_ids:
        for seed, off in zip(spec.transfer_seeds, offsets):
            lines.append(f"__none__,{tid},{seed},{BASE_SCORE + off!r}")
    for tid in target_ids:
        weight_of = dict(zip(planted[tid], weights))
        for sid in source_ids:
            base = BASE_SCORE + weight_of[sid]
            for seed, off in zip(spec.transfer_seeds, offsets):
                lines.append(f"{sid},{tid},{seed},{base + off!r}")
    (out / "transfer.csv").write_text("\n".join(lines) + "\n", "utf-8")

    meta = {
        "n_sources": spec.n_sources,
        "n_targets": spec.n_targets,
        "rows": spec.rows,
        "cols": spec.cols,
        "noise": spec.noise,
        "seed": spec.seed,
        "step": spec.step,
        "transfer_seeds": list(spec.transfer_seeds),
        "weights": weights,
        "planted_order": planted,
        "base_score": BASE_SCORE,
    }
    (out / "fixture_meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", "utf-8"
    )
    return meta
