"""On-disk artifacts: PTNS tensors, task manifests, and transfer tables.

PTNS is the single portable tensor format used throughout::

    bytes 0..3   magic b"PTNS"
    bytes 4..5   u16 little-endian version (currently 1)
    bytes 6..7   u16 little-endian header length H
    bytes 8..8+H UTF-8 JSON header, at least
                 {"task_id", "seed", "step", "rows", "cols"}
    then         rows*cols little-endian IEEE-754 f32, row-major, no padding

Payloads are stored as f32 but all in-memory math runs in f64 (exponentiated
ranking gains overflow f32 long before they trouble a double). Loaded
objects are immutable and safe to share across threads.
"""

from __future__ import annotations

import csv
import json
import math
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import (
    BadMagic,
    DuplicateTaskId,
    InvariantViolation,
    IoFailure,
    MissingArtifact,
    MissingEntry,
    NonFiniteEntry,
    NonFiniteScore,
    SchemaError,
    TruncatedPayload,
    VersionUnsupported,
)

PTNS_MAGIC = b"PTNS"
PTNS_VERSION = 1
_HEADER_KEYS = ("task_id", "seed", "step", "rows", "cols")

CATEGORIES = ("Classification", "MultipleChoice", "QA")
ROLES = ("Source", "Target", "Both")

#: Prompt-token count the evaluation setup assumes; other lengths load with
#: a warning because only the token-axis embedding requires matched counts.
EXPECTED_ROWS = 100

#: Reserved source id marking no-transfer baseline rows in transfer tables.
BASELINE_ID = "__none__"


class PromptShapeWarning(UserWarning):
    """Prompt matrix token count differs from the expected configuration."""


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PromptMatrix:
    """One task's soft-prompt weights: ``rows`` tokens by ``cols`` features."""

    task_id: str
    seed: int
    step: int
    rows: int
    cols: int
    data: np.ndarray  # float64, shape (rows, cols)

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise InvariantViolation(
                f"prompt matrix {self.task_id!r}: rows and cols must be >= 1, "
                f"got {self.rows}x{self.cols}"
            )
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.shape != (self.rows, self.cols):
            arr = arr.reshape(self.rows, self.cols)
        if not np.all(np.isfinite(arr)):
            idx = int(np.flatnonzero(~np.isfinite(arr.ravel()))[0])
            raise InvariantViolation(
                f"prompt matrix {self.task_id!r}: non-finite entry at flat index {idx}"
            )
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        if self.rows != EXPECTED_ROWS:
            # stacklevel 3 skips the dataclass-generated __init__ frame
            warnings.warn(
                f"prompt matrix {self.task_id!r} has {self.rows} tokens, "
                f"expected {EXPECTED_ROWS}",
                PromptShapeWarning,
                stacklevel=3,
            )

    def equals(self, other: "PromptMatrix") -> bool:
        return (
            self.task_id == other.task_id
            and self.seed == other.seed
            and self.step == other.step
            and self.rows == other.rows
            and self.cols == other.cols
            and np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True, eq=False)
class SentenceEmbeddingVec:
    """Dataset-mean sentence vector for one task, tagged by its encoder."""

    task_id: str
    encoder_id: str
    dim: int
    data: np.ndarray  # float64, shape (dim,)

    def __post_init__(self):
        if self.dim < 1:
            raise InvariantViolation(
                f"sentence vector {self.task_id!r}: dim must be >= 1, got {self.dim}"
            )
        arr = np.asarray(self.data, dtype=np.float64).reshape(self.dim)
        if not np.all(np.isfinite(arr)):
            raise InvariantViolation(
                f"sentence vector {self.task_id!r}: non-finite entry"
            )
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)


@dataclass(frozen=True)
class TaskRecord:
    """Task identity plus the metadata selection methods consume."""

    task_id: str
    display_name: str
    category: str
    train_size: int
    role: str

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise SchemaError(
                f"task {self.task_id!r}: category must be one of {CATEGORIES}, "
                f"got {self.category!r}"
            )
        if self.role not in ROLES:
            raise SchemaError(
                f"task {self.task_id!r}: role must be one of {ROLES}, got {self.role!r}"
            )
        if self.train_size < 0:
            raise SchemaError(f"task {self.task_id!r}: train_size must be >= 0")

    @property
    def is_source(self) -> bool:
        return self.role in ("Source", "Both")

    @property
    def is_target(self) -> bool:
        return self.role in ("Target", "Both")


@dataclass(frozen=True)
class Ranking:
    """Ordered source tasks with scores for one (target, method) pair.

    Items are descending by score; equal scores are ordered by ascending
    task id so rankings are reproducible across runs and platforms.
    """

    target_id: str
    method_id: str
    items: tuple[tuple[str, float], ...]

    def __post_init__(self):
        ids = [sid for sid, _ in self.items]
        if len(set(ids)) != len(ids):
            raise InvariantViolation(
                f"ranking for {self.target_id!r}/{self.method_id!r}: duplicate source"
            )
        scores = [s for _, s in self.items]
        if any(not math.isfinite(s) for s in scores):
            raise InvariantViolation(
                f"ranking for {self.target_id!r}/{self.method_id!r}: non-finite score"
            )
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise InvariantViolation(
                f"ranking for {self.target_id!r}/{self.method_id!r}: scores increase"
            )

    @classmethod
    def from_scores(
        cls, target_id: str, method_id: str, scores: Mapping[str, float]
    ) -> "Ranking":
        """Sort descending by score, ties broken by ascending task id."""
        items = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
        return cls(target_id, method_id, tuple((sid, float(v)) for sid, v in items))

    def source_ids(self) -> tuple[str, ...]:
        return tuple(sid for sid, _ in self.items)

    def top(self, k: int) -> tuple[str, ...]:
        return self.source_ids()[:k]


@dataclass(frozen=True)
class TransferTable:
    """Measured transfer scores per (source, target, seed) plus baselines."""

    entries: Mapping[tuple[str, str, int], float]
    baselines: Mapping[tuple[str, int], float]

    def seeds_for(self, source_id: str, target_id: str) -> tuple[int, ...]:
        return tuple(
            sorted(s for (src, tgt, s) in self.entries if src == source_id and tgt == target_id)
        )

    def score(self, source_id: str, target_id: str, seed: int) -> float:
        try:
            return self.entries[(source_id, target_id, seed)]
        except KeyError:
            raise _missing_entry(source_id, target_id, seed) from None

    def mean_score(self, source_id: str, target_id: str) -> float:
        seeds = self.seeds_for(source_id, target_id)
        if not seeds:
            raise _missing_entry(source_id, target_id, None)
        vals = [self.entries[(source_id, target_id, s)] for s in seeds]
        return float(np.mean(vals))

    def baseline_seeds(self, target_id: str) -> tuple[int, ...]:
        return tuple(sorted(s for (tgt, s) in self.baselines if tgt == target_id))

    def baseline_mean(self, target_id: str) -> float:
        seeds = self.baseline_seeds(target_id)
        if not seeds:
            raise _missing_entry(BASELINE_ID, target_id, None)
        vals = [self.baselines[(target_id, s)] for s in seeds]
        return float(np.mean(vals))

    def source_ids(self) -> tuple[str, ...]:
        return tuple(sorted({src for (src, _, _) in self.entries}))

    def target_ids(self) -> tuple[str, ...]:
        tgts = {tgt for (_, tgt, _) in self.entries}
        tgts.update(tgt for (tgt, _) in self.baselines)
        return tuple(sorted(tgts))


def _missing_entry(source_id: str, target_id: str, seed: int | None) -> MissingEntry:
    where = f"({source_id!r} -> {target_id!r}"
    where += ")" if seed is None else f", seed {seed})"
    return MissingEntry(f"transfer table has no entry for {where}")


# ---------------------------------------------------------------------------
# PTNS read / write
# ---------------------------------------------------------------------------

def read_ptns(path: str | Path) -> tuple[dict, np.ndarray]:
    """Parse a PTNS file into (header dict, float64 array of shape rows x cols).

    Raises BadMagic / VersionUnsupported / TruncatedPayload / NonFiniteEntry /
    SchemaError; every message names the byte offset where the problem was
    detected.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc

    if len(raw) < 4:
        raise TruncatedPayload(f"{path}: file ends at byte {len(raw)}, magic needs 4")
    if raw[:4] != PTNS_MAGIC:
        raise BadMagic(f"{path}: bad magic {raw[:4]!r} at byte offset 0")
    if len(raw) < 8:
        raise TruncatedPayload(f"{path}: file ends at byte {len(raw)}, fixed header needs 8")
    version, header_len = struct.unpack_from("<HH", raw, 4)
    if version != PTNS_VERSION:
        raise VersionUnsupported(
            f"{path}: version {version} at byte offset 4, supported: {PTNS_VERSION}"
        )
    header_end = 8 + header_len
    if len(raw) < header_end:
        raise TruncatedPayload(
            f"{path}: file ends at byte {len(raw)}, JSON header runs to {header_end}"
        )
    try:
        header = json.loads(raw[8:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{path}: unparseable JSON header at byte offset 8: {exc}") from exc
    missing = [k for k in _HEADER_KEYS if k not in header]
    if missing:
        raise SchemaError(f"{path}: header missing keys {missing} at byte offset 8")
    rows, cols = header["rows"], header["cols"]
    if not isinstance(rows, int) or not isinstance(cols, int):
        raise SchemaError(f"{path}: rows/cols must be integers at byte offset 8")
    if rows < 1 or cols < 1:
        raise InvariantViolation(f"{path}: declared shape {rows}x{cols} invalid")

    expected = rows * cols * 4
    payload = raw[header_end:]
    if len(payload) < expected:
        raise TruncatedPayload(
            f"{path}: file ends at byte {len(raw)}, payload of {expected} bytes "
            f"runs to {header_end + expected}"
        )
    if len(payload) > expected:
        raise SchemaError(
            f"{path}: {len(payload) - expected} trailing bytes after payload "
            f"at byte offset {header_end + expected}"
        )
    arr32 = np.frombuffer(payload, dtype="<f4", count=rows * cols)
    bad = np.flatnonzero(~np.isfinite(arr32))
    if bad.size:
        idx = int(bad[0])
        raise NonFiniteEntry(
            f"{path}: non-finite entry at flat index {idx} "
            f"(byte offset {header_end + 4 * idx})"
        )
    return header, arr32.astype(np.float64).reshape(rows, cols)


def write_ptns(path: str | Path, header: dict, data: np.ndarray) -> None:
    """Write a PTNS file; payload is cast to little-endian f32, row-major."""
    arr = np.ascontiguousarray(np.asarray(data), dtype="<f4")
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    if len(blob) > 0xFFFF:
        raise SchemaError(f"{path}: header JSON of {len(blob)} bytes exceeds u16 length")
    try:
        with open(path, "wb") as fh:
            fh.write(PTNS_MAGIC)
            fh.write(struct.pack("<HH", PTNS_VERSION, len(blob)))
            fh.write(blob)
            fh.write(arr.tobytes(order="C"))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_prompt_matrix(path: str | Path) -> PromptMatrix:
    header, arr = read_ptns(path)
    return PromptMatrix(
        task_id=str(header["task_id"]),
        seed=int(header["seed"]),
        step=int(header["step"]),
        rows=int(header["rows"]),
        cols=int(header["cols"]),
        data=arr,
    )


def save_prompt_matrix(m: PromptMatrix, path: str | Path) -> None:
    header = {
        "task_id": m.task_id,
        "seed": m.seed,
        "step": m.step,
        "rows": m.rows,
        "cols": m.cols,
    }
    write_ptns(path, header, m.data)


def load_semb_vector(path: str | Path) -> SentenceEmbeddingVec:
    """Load a 1 x d PTNS tensor tagged kind="semb" as a sentence vector."""
    header, arr = read_ptns(path)
    if header.get("kind") != "semb":
        raise SchemaError(f"{path}: expected header kind 'semb', got {header.get('kind')!r}")
    if "encoder_id" not in header:
        raise SchemaError(f"{path}: semb header missing encoder_id")
    if int(header["rows"]) != 1:
        raise SchemaError(f"{path}: semb tensor must be 1 x d, got {header['rows']} rows")
    return SentenceEmbeddingVec(
        task_id=str(header["task_id"]),
        encoder_id=str(header["encoder_id"]),
        dim=int(header["cols"]),
        data=arr[0],
    )


def save_semb_vector(v: SentenceEmbeddingVec, path: str | Path) -> None:
    header = {
        "task_id": v.task_id,
        "seed": 0,
        "step": 0,
        "rows": 1,
        "cols": v.dim,
        "kind": "semb",
        "encoder_id": v.encoder_id,
    }
    write_ptns(path, header, v.data.reshape(1, v.dim))


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ArtifactRef:
    """One manifest artifact entry with its path resolved."""

    task_id: str
    kind: str  # "prompt" | "semb"
    path: Path
    seed: int | None = None
    step: int | None = None
    encoder_id: str | None = None


@dataclass(frozen=True)
class Manifest:
    """Task records plus a resolvable artifact index."""

    tasks: tuple[TaskRecord, ...]
    artifacts: tuple[ArtifactRef, ...]
    path: Path
    by_id: Mapping[str, TaskRecord] = field(repr=False, default_factory=dict)

    def sources(self) -> tuple[TaskRecord, ...]:
        return tuple(t for t in self.tasks if t.is_source)

    def targets(self) -> tuple[TaskRecord, ...]:
        return tuple(t for t in self.tasks if t.is_target)

    def prompt_refs(self, task_id: str) -> tuple[ArtifactRef, ...]:
        return tuple(
            a for a in self.artifacts if a.kind == "prompt" and a.task_id == task_id
        )

    def semb_refs(self, task_id: str) -> tuple[ArtifactRef, ...]:
        return tuple(
            a for a in self.artifacts if a.kind == "semb" and a.task_id == task_id
        )

    def resolve_prompt(
        self,
        task_id: str,
        seed: int | str = "lowest",
        step: int | str = "latest",
    ) -> ArtifactRef:
        """Pick the prompt tensor for (task, seed policy, step policy).

        ``seed`` is an exact training seed or "lowest"; ``step`` is an exact
        step or "latest" (largest step present for the chosen seed).
        """
        refs = self.prompt_refs(task_id)
        if not refs:
            raise MissingArtifact(
                f"manifest {self.path}: no prompt tensor for task {task_id!r}"
            )
        seeds = sorted({r.seed for r in refs})
        want_seed = seeds[0] if seed == "lowest" else int(seed)
        refs = [r for r in refs if r.seed == want_seed]
        if not refs:
            raise MissingArtifact(
                f"manifest {self.path}: no prompt tensor for task {task_id!r} "
                f"with seed {want_seed} (have seeds {seeds})"
            )
        steps = sorted({r.step for r in refs})
        want_step = steps[-1] if step == "latest" else int(step)
        for r in refs:
            if r.step == want_step:
                return r
        raise MissingArtifact(
            f"manifest {self.path}: no prompt tensor for task {task_id!r} "
            f"at seed {want_seed}, step {want_step} (have steps {steps})"
        )

    def resolve_semb(self, task_id: str, encoder_id: str) -> ArtifactRef:
        refs = [r for r in self.semb_refs(task_id) if r.encoder_id == encoder_id]
        if not refs:
            have = sorted({r.encoder_id for r in self.semb_refs(task_id)})
            raise MissingArtifact(
                f"manifest {self.path}: no sentence vector for task {task_id!r} "
                f"under encoder {encoder_id!r} (have {have})"
            )
        return refs[0]


def load_manifest(path: str | Path) -> Manifest:
    """Parse and cross-check a manifest JSON document.

    The artifact index is built in a canonical order, so loading is
    independent of the order entries appear in the document.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text("utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "tasks" not in doc or "artifacts" not in doc:
        raise SchemaError(f"{path}: manifest needs 'tasks' and 'artifacts' arrays")

    tasks: list[TaskRecord] = []
    seen: set[str] = set()
    for i, entry in enumerate(doc["tasks"]):
        try:
            rec = TaskRecord(
                task_id=str(entry["id"]),
                display_name=str(entry["name"]),
                category=str(entry["category"]),
                train_size=int(entry["train_size"]),
                role=str(entry["role"]),
            )
        except KeyError as exc:
            raise SchemaError(f"{path}: tasks[{i}] missing key {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"{path}: tasks[{i}]: {exc}") from exc
        if rec.task_id in seen:
            raise DuplicateTaskId(f"{path}: task id {rec.task_id!r} declared twice")
        seen.add(rec.task_id)
        tasks.append(rec)

    base = path.parent
    refs: list[ArtifactRef] = []
    for i, entry in enumerate(doc["artifacts"]):
        try:
            task_id = str(entry["task_id"])
            kind = str(entry["kind"])
            rel = str(entry["path"])
        except KeyError as exc:
            raise SchemaError(f"{path}: artifacts[{i}] missing key {exc}") from exc
        if kind not in ("prompt", "semb"):
            raise SchemaError(f"{path}: artifacts[{i}]: unknown kind {kind!r}")
        if task_id not in seen:
            raise SchemaError(
                f"{path}: artifacts[{i}] references undeclared task {task_id!r}"
            )
        apath = (base / rel).resolve()
        if not apath.is_file():
            raise MissingArtifact(
                f"{path}: artifacts[{i}] for task {task_id!r} points to missing file {apath}"
            )
        seed = entry.get("seed")
        step = entry.get("step")
        encoder_id = entry.get("encoder_id")
        if kind == "prompt":
            if seed is None or step is None:
                raise SchemaError(
                    f"{path}: artifacts[{i}]: prompt artifact for {task_id!r} "
                    f"needs seed and step"
                )
            seed, step = int(seed), int(step)
        else:
            if encoder_id is None:
                # probe the tensor header once so the index is self-contained
                header, _ = read_ptns(apath)
                encoder_id = header.get("encoder_id")
                if encoder_id is None:
                    raise SchemaError(
                        f"{path}: artifacts[{i}]: semb artifact for {task_id!r} "
                        f"carries no encoder_id (neither manifest nor header)"
                    )
            seed = None if seed is None else int(seed)
            step = None if step is None else int(step)
        refs.append(ArtifactRef(task_id, kind, apath, seed, step, str(encoder_id) if encoder_id else None))

    def keyer(r: ArtifactRef):
        return (r.task_id, r.kind, r.seed or 0, r.step or 0, r.encoder_id or "")

    keys = [keyer(r) for r in refs]
    if len(set(keys)) != len(keys):
        dup = next(k for k in keys if keys.count(k) > 1)
        raise SchemaError(f"{path}: duplicate artifact entry {dup}")

    tasks_sorted = tuple(sorted(tasks, key=lambda t: t.task_id))
    refs_sorted = tuple(sorted(refs, key=keyer))
    return Manifest(
        tasks=tasks_sorted,
        artifacts=refs_sorted,
        path=path,
        by_id={t.task_id: t for t in tasks_sorted},
    )


# ---------------------------------------------------------------------------
# transfer table
# ---------------------------------------------------------------------------

def load_transfer_table(path: str | Path) -> TransferTable:
    """Parse a ``source,target,seed,score`` CSV; ``__none__`` rows are baselines."""
    path = Path(path)
    try:
        text = path.read_text("utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc

    reader = csv.reader(text.splitlines())
    rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: empty transfer table")
    if [c.strip() for c in rows[0]] != ["source", "target", "seed", "score"]:
        raise SchemaError(
            f"{path}: header must be 'source,target,seed,score', got {rows[0]!r}"
        )

    entries: dict[tuple[str, str, int], float] = {}
    baselines: dict[tuple[str, int], float] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 4:
            raise SchemaError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
        src, tgt, seed_s, score_s = (c.strip() for c in row)
        try:
            seed = int(seed_s)
        except ValueError as exc:
            raise SchemaError(f"{path}:{lineno}: seed {seed_s!r} is not an integer") from exc
        try:
            score = float(score_s)
        except ValueError as exc:
            raise SchemaError(f"{path}:{lineno}: score {score_s!r} is not a number") from exc
        if not math.isfinite(score):
            raise NonFiniteScore(
                f"{path}:{lineno}: non-finite score for ({src!r} -> {tgt!r}, seed {seed})"
            )
        if src == BASELINE_ID:
            key = (tgt, seed)
            if key in baselines:
                raise SchemaError(f"{path}:{lineno}: duplicate baseline for {key}")
            baselines[key] = score
        else:
            ekey = (src, tgt, seed)
            if ekey in entries:
                raise SchemaError(f"{path}:{lineno}: duplicate entry for {ekey}")
            entries[ekey] = score
    if not entries and not baselines:
        raise SchemaError(f"{path}: transfer table has a header but no rows")
    return TransferTable(entries=entries, baselines=baselines)


def save_transfer_table(table: TransferTable, path: str | Path) -> None:
    """Write a table back out in canonical row order."""
    lines = ["source,target,seed,score"]
    for (tgt, seed) in sorted(table.baselines):
        lines.append(f"{BASELINE_ID},{tgt},{seed},{table.baselines[(tgt, seed)]!r}")
    for (src, tgt, seed) in sorted(table.entries):
        lines.append(f"{src},{tgt},{seed},{table.entries[(src, tgt, seed)]!r}")
    Path(path).write_text("\n".join(lines) + "\n", "utf-8")
