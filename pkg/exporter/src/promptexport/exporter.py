"""Export jobs: checkpoint -> PTNS tensor, dataset -> mean sentence vector.

Each export writes its tensor atomically and records an entry in
``manifest.fragment.json`` in the output directory (merging with whatever
earlier exports put there), ready to be spliced into a pipeline manifest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .checkpoints import DEFAULT_TENSOR_PATTERN, find_prompt_tensor, load_checkpoint_tensors
from .encoders import Encoder
from .errors import EmptyDataset, EncoderFailure, ExportError, ShapeUnexpected
from .ptns import prompt_header, semb_header, write_ptns_atomic

FRAGMENT_NAME = "manifest.fragment.json"
DEFAULT_BATCH_SIZE = 64


@dataclass(frozen=True)
class ExportJob:
    """One conversion request."""

    input_path: Path
    task_id: str
    output_dir: Path
    kind: str  # "prompt" | "semb"
    seed: int | None = None
    step: int | None = None
    encoder_id: str | None = None

    def __post_init__(self):
        if not self.task_id:
            raise ExportError("task_id must be nonempty")
        if self.kind not in ("prompt", "semb"):
            raise ExportError(f"kind must be 'prompt' or 'semb', got {self.kind!r}")
        if self.kind == "prompt" and (self.seed is None or self.step is None):
            raise ExportError("prompt export needs seed and step")


def _merge_fragment(out_dir: Path, entry: dict) -> Path:
    fragment_path = out_dir / FRAGMENT_NAME
    artifacts: list[dict] = []
    if fragment_path.is_file():
        artifacts = json.loads(fragment_path.read_text("utf-8")).get("artifacts", [])
    key = (
        entry["task_id"],
        entry["kind"],
        entry.get("seed"),
        entry.get("step"),
        entry.get("encoder_id"),
    )
    artifacts = [
        a
        for a in artifacts
        if (a["task_id"], a["kind"], a.get("seed"), a.get("step"), a.get("encoder_id"))
        != key
    ]
    artifacts.append(entry)
    artifacts.sort(key=lambda a: (a["task_id"], a["kind"], a.get("seed") or 0,
                                  a.get("step") or 0, a.get("encoder_id") or ""))
    fragment_path.write_text(
        json.dumps({"artifacts": artifacts}, indent=2, sort_keys=True) + "\n", "utf-8"
    )
    return fragment_path


def export_prompt(
    job: ExportJob, tensor_pattern: str = DEFAULT_TENSOR_PATTERN
) -> tuple[Path, Path]:
    """Extract the prompt matrix and write it as PTNS; returns (tensor, fragment)."""
    tensors = load_checkpoint_tensors(job.input_path)
    name, arr = find_prompt_tensor(tensors, tensor_pattern, source=str(job.input_path))
    rows, cols = arr.shape
    filename = f"{job.task_id}_s{job.seed}_t{job.step}.ptns"
    out_path = job.output_dir / filename
    write_ptns_atomic(
        out_path, prompt_header(job.task_id, job.seed, job.step, rows, cols), arr
    )
    fragment = _merge_fragment(
        job.output_dir,
        {
            "task_id": job.task_id,
            "kind": "prompt",
            "seed": job.seed,
            "step": job.step,
            "path": filename,
            "source_tensor": name,
        },
    )
    return out_path, fragment


def read_text_dataset(path: str | Path) -> list[str]:
    """Examples from a dataset file: .jsonl with a "text" field, or raw lines."""
    path = Path(path)
    texts: list[str] = []
    if path.suffix.lower() in (".jsonl", ".ndjson"):
        for lineno, line in enumerate(path.read_text("utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            doc = json.loads(line)
            if "text" not in doc:
                raise ExportError(f"{path}:{lineno}: JSONL record lacks a 'text' field")
            texts.append(str(doc["text"]))
    else:
        texts = [line for line in path.read_text("utf-8").splitlines() if line.strip()]
    return texts


def mean_embedding(
    encoder: Encoder, texts: Sequence[str], batch_size: int = DEFAULT_BATCH_SIZE
) -> np.ndarray:
    """Dataset-mean vector, accumulated as per-batch f64 sums then reduced.

    The two-level summation keeps the mean stable under re-batching (the
    batch boundaries change which partial sums exist, but each partial sum
    is exact enough in f64 that the final mean moves by far less than 1e-6).
    """
    if not texts:
        raise EmptyDataset("dataset has no examples to encode")
    batch_sums = []
    dim = None
    for start in range(0, len(texts), batch_size):
        batch = list(texts[start : start + batch_size])
        vectors = np.asarray(encoder.encode(batch), dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(batch):
            raise EncoderFailure(
                f"encoder returned shape {vectors.shape} for a batch of {len(batch)}"
            )
        if dim is None:
            dim = vectors.shape[1]
        elif vectors.shape[1] != dim:
            raise EncoderFailure(
                f"encoder changed dimension mid-run: {vectors.shape[1]} vs {dim}"
            )
        batch_sums.append(vectors.sum(axis=0))
    total = np.sum(np.stack(batch_sums, axis=0), axis=0)
    return total / float(len(texts))


def export_semb(
    job: ExportJob, encoder: Encoder, batch_size: int = DEFAULT_BATCH_SIZE
) -> tuple[Path, Path]:
    """Encode the dataset, average, and write the 1 x d semb PTNS tensor."""
    texts = read_text_dataset(job.input_path)
    mean = mean_embedding(encoder, texts, batch_size)
    if not np.all(np.isfinite(mean)):
        raise ShapeUnexpected("mean sentence vector contains non-finite entries")
    encoder_id = job.encoder_id or encoder.encoder_id
    filename = f"{job.task_id}_{encoder_id}.ptns"
    out_path = job.output_dir / filename
    write_ptns_atomic(
        out_path,
        semb_header(job.task_id, encoder_id, mean.shape[0]),
        mean.reshape(1, -1),
    )
    fragment = _merge_fragment(
        job.output_dir,
        {
            "task_id": job.task_id,
            "kind": "semb",
            "encoder_id": encoder_id,
            "path": filename,
        },
    )
    return out_path, fragment
