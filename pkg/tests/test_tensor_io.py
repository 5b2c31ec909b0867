"""Artifact parsing: PTNS tensors, manifests, transfer tables."""

from __future__ import annotations

import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from taskrank.errors import (
    BadMagic,
    DuplicateTaskId,
    InvariantViolation,
    MissingArtifact,
    MissingEntry,
    NonFiniteEntry,
    NonFiniteScore,
    SchemaError,
    TruncatedPayload,
    VersionUnsupported,
)
from taskrank.tensor_io import (
    PromptMatrix,
    PromptShapeWarning,
    SentenceEmbeddingVec,
    load_manifest,
    load_prompt_matrix,
    load_semb_vector,
    load_transfer_table,
    save_prompt_matrix,
    save_semb_vector,
)

from conftest import make_matrix, random_f32_matrix, write_manifest


# ---------------------------------------------------------------------------
# PTNS round trips
# ---------------------------------------------------------------------------

def test_round_trip_small(tmp_path):
    m = make_matrix("demo", [[1, 2, 3], [4, 5, 6]])
    path = tmp_path / "demo.ptns"
    save_prompt_matrix(m, path)
    loaded = load_prompt_matrix(path)
    assert loaded.rows == 2 and loaded.cols == 3
    assert loaded.task_id == "demo" and loaded.seed == 42 and loaded.step == 30000
    assert np.array_equal(loaded.data, [[1, 2, 3], [4, 5, 6]])
    assert loaded.equals(m)


def test_round_trip_large_exact(tmp_path):
    rng = np.random.default_rng(20240101)
    m = make_matrix("big", random_f32_matrix(rng, 100, 768))
    path = tmp_path / "big.ptns"
    save_prompt_matrix(m, path)
    loaded = load_prompt_matrix(path)
    assert loaded.data.size == 76800
    assert np.max(np.abs(loaded.data - m.data)) == 0.0
    # spot value survives the f32 payload
    assert loaded.data[17, 353] == m.data[17, 353]


@settings(max_examples=50, deadline=None)
@given(
    rows=st.integers(min_value=1, max_value=20),
    cols=st.integers(min_value=1, max_value=20),
    seed=st.integers(min_value=0, max_value=2**31 - 1),
)
def test_round_trip_property(tmp_path_factory, rows, cols, seed):
    rng = np.random.default_rng(seed)
    m = make_matrix("prop", random_f32_matrix(rng, rows, cols))
    path = tmp_path_factory.mktemp("ptns") / "prop.ptns"
    save_prompt_matrix(m, path)
    assert load_prompt_matrix(path).equals(m)


def test_zero_row_matrix_rejected_before_write():
    with pytest.raises(InvariantViolation):
        PromptMatrix("bad", 0, 0, 0, 3, np.zeros((0, 3)))


def test_nonfinite_matrix_rejected():
    with pytest.raises(InvariantViolation):
        make_matrix("bad", [[1.0, np.nan]])


def test_unexpected_token_count_warns():
    with pytest.warns(PromptShapeWarning):
        make_matrix("odd", np.ones((3, 4)))


# ---------------------------------------------------------------------------
# malformed files: every corpus entry yields its designated error
# ---------------------------------------------------------------------------

def _valid_bytes() -> bytes:
    header = json.dumps(
        {"task_id": "x", "seed": 1, "step": 2, "rows": 2, "cols": 2}
    ).encode()
    payload = np.arange(4, dtype="<f4").tobytes()
    return b"PTNS" + struct.pack("<HH", 1, len(header)) + header + payload


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.ptns"
    path.write_bytes(b"XXXX" + _valid_bytes()[4:])
    with pytest.raises(BadMagic, match="byte offset 0"):
        load_prompt_matrix(path)


def test_version_unsupported(tmp_path):
    raw = bytearray(_valid_bytes())
    raw[4:6] = struct.pack("<H", 2)
    path = tmp_path / "v2.ptns"
    path.write_bytes(bytes(raw))
    with pytest.raises(VersionUnsupported, match="byte offset 4"):
        load_prompt_matrix(path)


@pytest.mark.parametrize("cut", [2, 6, 20])
def test_truncated(tmp_path, cut):
    raw = _valid_bytes()
    path = tmp_path / "cut.ptns"
    path.write_bytes(raw[: len(raw) - cut])
    with pytest.raises(TruncatedPayload, match=f"byte {len(raw) - cut}"):
        load_prompt_matrix(path)


def test_trailing_bytes_rejected(tmp_path):
    path = tmp_path / "trail.ptns"
    path.write_bytes(_valid_bytes() + b"\x00\x00")
    with pytest.raises(SchemaError, match="trailing"):
        load_prompt_matrix(path)


def test_nonfinite_entry_names_offset(tmp_path):
    raw = bytearray(_valid_bytes())
    # third payload float (flat index 2)
    payload_start = len(raw) - 16
    raw[payload_start + 8 : payload_start + 12] = struct.pack("<f", float("nan"))
    path = tmp_path / "nan.ptns"
    path.write_bytes(bytes(raw))
    with pytest.raises(NonFiniteEntry, match=f"byte offset {payload_start + 8}"):
        load_prompt_matrix(path)


def test_header_missing_keys(tmp_path):
    header = json.dumps({"task_id": "x", "rows": 1, "cols": 1}).encode()
    raw = b"PTNS" + struct.pack("<HH", 1, len(header)) + header + b"\x00" * 4
    path = tmp_path / "nokeys.ptns"
    path.write_bytes(raw)
    with pytest.raises(SchemaError, match="missing keys"):
        load_prompt_matrix(path)


# ---------------------------------------------------------------------------
# sentence vectors
# ---------------------------------------------------------------------------

def test_semb_round_trip(tmp_path):
    v = SentenceEmbeddingVec("cb", "stub", 4, np.array([0.5, -0.25, 1.0, 2.0]))
    path = tmp_path / "cb.ptns"
    save_semb_vector(v, path)
    loaded = load_semb_vector(path)
    assert loaded.task_id == "cb" and loaded.encoder_id == "stub" and loaded.dim == 4
    assert np.array_equal(loaded.data, v.data)


def test_semb_rejects_prompt_tensor(tmp_path):
    path = tmp_path / "p.ptns"
    save_prompt_matrix(make_matrix("t", [[1.0, 2.0]]), path)
    with pytest.raises(SchemaError, match="semb"):
        load_semb_vector(path)


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------

def _workspace(tmp_path, n_sources=13, n_targets=10):
    tasks, artifacts = [], []
    for i in range(n_sources + n_targets):
        tid = f"s{i}" if i < n_sources else f"t{i - n_sources}"
        role = "Source" if i < n_sources else "Target"
        tasks.append(
            {
                "id": tid,
                "name": tid.upper(),
                "category": "Classification",
                "train_size": 1000 + i,
                "role": role,
            }
        )
        rel = f"{tid}.ptns"
        save_prompt_matrix(make_matrix(tid, [[1.0, float(i)]]), tmp_path / rel)
        artifacts.append(
            {"task_id": tid, "kind": "prompt", "seed": 42, "step": 5000, "path": rel}
        )
    return tasks, artifacts


def test_manifest_counts(tmp_path):
    tasks, artifacts = _workspace(tmp_path)
    manifest = load_manifest(write_manifest(tmp_path / "m.json", tasks, artifacts))
    assert len(manifest.tasks) == 23
    assert len(manifest.sources()) == 13
    assert len(manifest.targets()) == 10
    ref = manifest.resolve_prompt("s3", "lowest", "latest")
    assert ref.path.name == "s3.ptns"


def test_manifest_duplicate_task(tmp_path):
    tasks, artifacts = _workspace(tmp_path, 2, 1)
    tasks.append(dict(tasks[0]))
    with pytest.raises(DuplicateTaskId, match="s0"):
        load_manifest(write_manifest(tmp_path / "m.json", tasks, artifacts))


def test_manifest_missing_artifact(tmp_path):
    tasks, artifacts = _workspace(tmp_path, 2, 1)
    artifacts[0]["path"] = "nowhere.ptns"
    with pytest.raises(MissingArtifact, match="nowhere.ptns"):
        load_manifest(write_manifest(tmp_path / "m.json", tasks, artifacts))


def test_manifest_unknown_task_reference(tmp_path):
    tasks, artifacts = _workspace(tmp_path, 2, 1)
    artifacts[0] = dict(artifacts[0], task_id="ghost")
    with pytest.raises(SchemaError, match="ghost"):
        load_manifest(write_manifest(tmp_path / "m.json", tasks, artifacts))


def test_manifest_schema_error(tmp_path):
    tasks, artifacts = _workspace(tmp_path, 2, 1)
    del tasks[0]["category"]
    with pytest.raises(SchemaError):
        load_manifest(write_manifest(tmp_path / "m.json", tasks, artifacts))


def test_manifest_order_independent(tmp_path):
    tasks, artifacts = _workspace(tmp_path, 3, 2)
    m1 = load_manifest(write_manifest(tmp_path / "m1.json", tasks, artifacts))
    m2 = load_manifest(
        write_manifest(tmp_path / "m2.json", tasks[::-1], artifacts[::-1])
    )
    assert m1.tasks == m2.tasks
    assert [(a.task_id, a.kind, a.path) for a in m1.artifacts] == [
        (a.task_id, a.kind, a.path) for a in m2.artifacts
    ]


def test_manifest_step_and_seed_resolution(tmp_path):
    tasks = [
        {"id": "a", "name": "A", "category": "QA", "train_size": 10, "role": "Source"}
    ]
    artifacts = []
    for seed in (42, 150):
        for step in (5000, 30000):
            rel = f"a_{seed}_{step}.ptns"
            save_prompt_matrix(make_matrix("a", [[float(step)]], seed, step), tmp_path / rel)
            artifacts.append(
                {"task_id": "a", "kind": "prompt", "seed": seed, "step": step, "path": rel}
            )
    manifest = load_manifest(write_manifest(tmp_path / "m.json", tasks, artifacts))
    assert manifest.resolve_prompt("a").path.name == "a_42_30000.ptns"
    assert manifest.resolve_prompt("a", 150, 5000).path.name == "a_150_5000.ptns"
    with pytest.raises(MissingArtifact, match="seed 99"):
        manifest.resolve_prompt("a", 99)
    with pytest.raises(MissingArtifact, match="step 123"):
        manifest.resolve_prompt("a", 42, 123)


# ---------------------------------------------------------------------------
# transfer tables
# ---------------------------------------------------------------------------

def test_transfer_table_rows(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text(
        "source,target,seed,score\n"
        "record,cb,112,89.29\n"
        "__none__,cb,112,85.64\n"
    )
    table = load_transfer_table(path)
    assert table.entries[("record", "cb", 112)] == 89.29
    assert table.baselines[("cb", 112)] == 85.64
    assert table.mean_score("record", "cb") == 89.29
    assert table.baseline_mean("cb") == 85.64


def test_transfer_table_mean_over_seeds(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text(
        "source,target,seed,score\n"
        "a,t,1,80\n"
        "a,t,2,84\n"
        "__none__,t,1,70\n"
    )
    table = load_transfer_table(path)
    assert table.mean_score("a", "t") == 82.0
    assert table.seeds_for("a", "t") == (1, 2)
    with pytest.raises(MissingEntry):
        table.mean_score("b", "t")
    with pytest.raises(MissingEntry):
        table.baseline_mean("u")


def test_transfer_table_empty(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("")
    with pytest.raises(SchemaError):
        load_transfer_table(path)


def test_transfer_table_header_only(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("source,target,seed,score\n")
    with pytest.raises(SchemaError):
        load_transfer_table(path)


def test_transfer_table_bad_header(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("src,tgt,seed,score\na,b,1,2\n")
    with pytest.raises(SchemaError, match="header"):
        load_transfer_table(path)


def test_transfer_table_nonfinite(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("source,target,seed,score\na,b,1,nan\n")
    with pytest.raises(NonFiniteScore):
        load_transfer_table(path)
