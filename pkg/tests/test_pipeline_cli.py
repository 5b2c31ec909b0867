"""End-to-end pipeline and CLI behavior on small synthetic workspaces."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from taskrank import cli
from taskrank.errors import ConfigError
from taskrank.pipeline import (
    RunConfig,
    load_workspace,
    run_eval,
    run_rank,
)
from taskrank.tensor_io import save_prompt_matrix, save_semb_vector, SentenceEmbeddingVec

from conftest import make_matrix


def build_workspace(
    root: Path,
    matrices: dict[str, np.ndarray],
    roles: dict[str, str],
    transfer_rows: list[tuple[str, str, int, float]],
    categories: dict[str, str] | None = None,
    train_sizes: dict[str, int] | None = None,
) -> Path:
    """Write a minimal manifest + tensors + transfer table under root."""
    root.mkdir(parents=True, exist_ok=True)
    (root / "tensors").mkdir(exist_ok=True)
    tasks, artifacts = [], []
    for tid, data in matrices.items():
        rel = f"tensors/{tid}.ptns"
        save_prompt_matrix(make_matrix(tid, data), root / rel)
        artifacts.append(
            {"task_id": tid, "kind": "prompt", "seed": 42, "step": 30000, "path": rel}
        )
        vec = np.arange(1.0, 4.0) + hash(tid) % 7
        rel_s = f"tensors/{tid}_semb.ptns"
        save_semb_vector(SentenceEmbeddingVec(tid, "stub", 3, vec), root / rel_s)
        artifacts.append(
            {"task_id": tid, "kind": "semb", "encoder_id": "stub", "path": rel_s}
        )
        tasks.append(
            {
                "id": tid,
                "name": tid.upper(),
                "category": (categories or {}).get(tid, "QA"),
                "train_size": (train_sizes or {}).get(tid, 1000),
                "role": roles[tid],
            }
        )
    (root / "manifest.json").write_text(
        json.dumps({"tasks": tasks, "artifacts": artifacts}, indent=2), "utf-8"
    )
    lines = ["source,target,seed,score"]
    for src, tgt, seed, score in transfer_rows:
        lines.append(f"{src},{tgt},{seed},{score!r}")
    (root / "transfer.csv").write_text("\n".join(lines) + "\n", "utf-8")
    return root


def hand_workspace(root: Path) -> RunConfig:
    """3 sources, 1 target; feature method predicts [b, a, c], truth is [a, b, c]."""
    matrices = {
        "a": np.array([[1.0, 0.3]]),
        "b": np.array([[1.0, 0.1]]),
        "c": np.array([[0.0, 1.0]]),
        "t": np.array([[1.0, 0.0]]),
    }
    roles = {"a": "Source", "b": "Source", "c": "Source", "t": "Target"}
    rows = [
        ("a", "t", 1, 3.0),
        ("b", "t", 1, 2.0),
        ("c", "t", 1, 1.0),
        ("__none__", "t", 1, 1.0),
    ]
    build_workspace(root, matrices, roles, rows)
    return RunConfig(
        manifest_path=root / "manifest.json",
        transfer_table_path=root / "transfer.csv",
        methods=("feature",),
        k_values=(1, 3),
        output_dir=root / "out",
    )


@pytest.fixture
def mini_fixture(tmp_path):
    """Small planted-structure workspace generated through the CLI."""
    ws = tmp_path / "ws"
    rc = cli.main(
        [
            "export-fixture",
            "--out", str(ws),
            "--sources", "4",
            "--targets", "3",
            "--rows", "12",
            "--cols", "16",
        ]
    )
    assert rc == 0
    return ws


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

def test_validate_ok_summary(mini_fixture, capsys):
    rc = cli.main(["validate", "--config", str(mini_fixture / "config.json")])
    assert rc == 0
    assert "OK, 4 sources, 3 targets, 6 methods" in capsys.readouterr().out


def test_validate_missing_artifact_diagnostic(mini_fixture, capsys):
    victim = next((mini_fixture / "tensors").glob("src1*.ptns"))
    victim.unlink()
    rc = cli.main(["validate", "--config", str(mini_fixture / "config.json")])
    assert rc == 2
    err = capsys.readouterr().err
    assert "src1" in err and "missing file" in err


def test_validate_reports_all_problems(mini_fixture, capsys):
    table = mini_fixture / "transfer.csv"
    lines = [
        line
        for line in table.read_text().splitlines()
        if not line.startswith(("src0,tgt0", "src1,tgt1"))
    ]
    table.write_text("\n".join(lines) + "\n")
    rc = cli.main(["validate", "--config", str(mini_fixture / "config.json")])
    assert rc == 2
    err = capsys.readouterr().err
    assert "'src0' -> 'tgt0'" in err and "'src1' -> 'tgt1'" in err


def test_validate_unigram_token_count_mismatch(tmp_path, capsys):
    matrices = {
        "a": np.ones((2, 3)) + np.arange(6).reshape(2, 3),
        "t": np.ones((4, 3)) + np.arange(12).reshape(4, 3),
    }
    roles = {"a": "Source", "t": "Target"}
    root = build_workspace(
        tmp_path / "ws",
        matrices,
        roles,
        [("a", "t", 1, 50.0), ("__none__", "t", 1, 40.0)],
    )
    rc = cli.main(
        [
            "validate",
            "--manifest", str(root / "manifest.json"),
            "--table", str(root / "transfer.csv"),
            "--methods", "unigram",
        ]
    )
    assert rc == 2
    assert "token count differs" in capsys.readouterr().err


def test_validate_feature_dim_mismatch(tmp_path, capsys):
    matrices = {"a": np.ones((2, 3)), "t": np.ones((2, 5))}
    roles = {"a": "Source", "t": "Target"}
    root = build_workspace(
        tmp_path / "ws",
        matrices,
        roles,
        [("a", "t", 1, 50.0), ("__none__", "t", 1, 40.0)],
    )
    rc = cli.main(
        [
            "validate",
            "--manifest", str(root / "manifest.json"),
            "--table", str(root / "transfer.csv"),
            "--methods", "feature,max",
        ]
    )
    assert rc == 2
    assert "feature dimension differs" in capsys.readouterr().err


def test_validate_k_beyond_sources(mini_fixture, capsys):
    rc = cli.main(
        ["validate", "--config", str(mini_fixture / "config.json"), "--k", "1,9"]
    )
    assert rc == 2
    assert "k=9 exceeds" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# rank
# ---------------------------------------------------------------------------

def test_rank_deterministic_bytes(mini_fixture):
    config = RunConfig.from_file(mini_fixture / "config.json")
    out1 = config.replace(output_dir=mini_fixture / "o1")
    out2 = config.replace(output_dir=mini_fixture / "o2")
    run_rank(out1)
    run_rank(out2)
    b1 = (mini_fixture / "o1" / "rankings.json").read_bytes()
    b2 = (mini_fixture / "o2" / "rankings.json").read_bytes()
    assert b1 == b2


def test_rank_random_same_master_seed_same_bytes(mini_fixture):
    config = RunConfig.from_file(mini_fixture / "config.json").replace(
        methods=("random",), master_seed=77
    )
    run_rank(config.replace(output_dir=mini_fixture / "r1"))
    run_rank(config.replace(output_dir=mini_fixture / "r2"))
    assert (mini_fixture / "r1" / "rankings.json").read_bytes() == (
        mini_fixture / "r2" / "rankings.json"
    ).read_bytes()
    # a different master seed should change at least one ranking
    run_rank(config.replace(master_seed=78, output_dir=mini_fixture / "r3"))
    assert (mini_fixture / "r1" / "rankings.json").read_bytes() != (
        mini_fixture / "r3" / "rankings.json"
    ).read_bytes()


def test_rank_size_puts_largest_first(mini_fixture):
    config = RunConfig.from_file(mini_fixture / "config.json").replace(
        methods=("size",), output_dir=mini_fixture / "so"
    )
    run_rank(config)
    doc = json.loads((mini_fixture / "so" / "rankings.json").read_text())
    for ranking in doc["rankings"]:
        # fixture sizes decrease with the source index
        assert ranking["items"][0]["source_id"] == "src0"


def test_rank_size_on_published_train_sizes(tmp_path):
    # the classic benchmark sizes: mnli 393K tops qqp 364K everywhere
    sizes = {"mnli": 393000, "qqp": 364000, "qnli": 105000, "race": 25000, "cb": 250}
    matrices = {tid: np.eye(2) + i for i, tid in enumerate(sizes)}
    roles = {tid: "Source" for tid in sizes} | {"cb": "Target"}
    rows = [(s, "cb", 1, 50.0) for s in sizes if s != "cb"]
    rows.append(("__none__", "cb", 1, 40.0))
    root = build_workspace(
        tmp_path / "ws", matrices, roles, rows, train_sizes=sizes
    )
    config = RunConfig(
        manifest_path=root / "manifest.json",
        transfer_table_path=root / "transfer.csv",
        methods=("size",),
        k_values=(1,),
        output_dir=root / "out",
    )
    run_rank(config)
    doc = json.loads((root / "out" / "rankings.json").read_text())
    (ranking,) = doc["rankings"]
    ordered = [item["source_id"] for item in ranking["items"]]
    assert ordered[:2] == ["mnli", "qqp"]
    assert ordered == ["mnli", "qqp", "qnli", "race"]


def test_rank_max_recovers_planted_order(mini_fixture):
    config = RunConfig.from_file(mini_fixture / "config.json").replace(
        methods=("max",), output_dir=mini_fixture / "mo"
    )
    run_rank(config)
    doc = json.loads((mini_fixture / "mo" / "rankings.json").read_text())
    planted = json.loads((mini_fixture / "fixture_meta.json").read_text())[
        "planted_order"
    ]
    for ranking in doc["rankings"]:
        got = [item["source_id"] for item in ranking["items"]]
        assert got == planted[ranking["target_id"]]


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def test_eval_writes_bundle_and_metrics(mini_fixture):
    config = RunConfig.from_file(mini_fixture / "config.json").replace(
        monte_carlo_trials=300
    )
    report = run_eval(config)
    out = Path(config.output_dir)
    for name in ("rankings.json", "metrics.json", "summary.csv", "gains.csv", "run_meta.json"):
        assert (out / name).is_file(), name
    # planted fixture: max is a perfect predictor
    for tid in ("tgt0", "tgt1", "tgt2"):
        cell = report.per_target[(tid, "max")]
        assert cell.ndcg == 1.0
        assert cell.regret_at_k[1] == 0.0


def test_eval_pred_equals_truth_fixture(tmp_path):
    # ground truth ordered like the planted max order in a tiny workspace
    ws = tmp_path / "ws"
    rc = cli.main(
        ["export-fixture", "--out", str(ws), "--sources", "3", "--targets", "2",
         "--rows", "8", "--cols", "6"]
    )
    assert rc == 0
    config = RunConfig.from_file(ws / "config.json").replace(
        methods=("max",), monte_carlo_trials=10
    )
    report = run_eval(config)
    for (tid, _), cell in report.per_target.items():
        assert cell.ndcg == 1.0
        assert all(v == 0.0 for v in cell.regret_at_k.values())


def test_eval_hand_computed_ndcg_cell(tmp_path):
    config = hand_workspace(tmp_path / "ws")
    report = run_eval(config)
    cell = report.per_target[("t", "feature")]
    assert cell.ndcg == pytest.approx(0.84282, abs=1e-4)
    assert cell.regret_at_k[1] == pytest.approx(100.0 * (3.0 - 2.0) / 3.0, abs=1e-9)
    assert cell.regret_at_k[3] == 0.0
    # summary row carries the same value
    summary = (tmp_path / "ws" / "out" / "summary.csv").read_text().splitlines()
    assert summary[0] == "method,category,ndcg,regret_at_1,regret_at_3"
    feature_all = next(l for l in summary if l.startswith("feature,All"))
    assert float(feature_all.split(",")[2]) == pytest.approx(0.84282, abs=1e-4)


def test_eval_gains_rows_mirror_k_values(mini_fixture):
    config = RunConfig.from_file(mini_fixture / "config.json").replace(
        monte_carlo_trials=200, k_values=(1, 3)
    )
    run_eval(config)
    lines = (Path(config.output_dir) / "gains.csv").read_text().splitlines()
    assert lines[0] == "method,k,abs_gain,rel_gain_pct,avg_score"
    assert lines[1].startswith("no_transfer,")
    rows = [line.split(",")[:2] for line in lines[2:]]
    assert ["random", "1"] in rows and ["size", "1"] in rows
    assert ["random", "3"] not in rows and ["size", "3"] not in rows
    for method in ("semb:stub", "feature", "unigram", "max"):
        assert [method, "1"] in rows and [method, "3"] in rows


def test_eval_worker_count_never_changes_bytes(mini_fixture, monkeypatch):
    config = RunConfig.from_file(mini_fixture / "config.json").replace(
        monte_carlo_trials=200
    )
    digests = {}
    for workers in ("1", "8"):
        monkeypatch.setenv("TASKRANK_THREADS", workers)
        out = mini_fixture / f"w{workers}"
        run_eval(config.replace(output_dir=out))
        digests[workers] = tuple(
            (out / n).read_bytes()
            for n in ("rankings.json", "metrics.json", "summary.csv", "gains.csv")
        )
    assert digests["1"] == digests["8"]


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def test_report_renders_method_rows(mini_fixture, capsys):
    rc = cli.main(
        ["eval", "--config", str(mini_fixture / "config.json"), "--trials", "100"]
    )
    assert rc == 0
    rc = cli.main(
        ["report", "--config", str(mini_fixture / "config.json"), "--plot-data"]
    )
    assert rc == 0
    text = (mini_fixture / "out" / "report.md").read_text()
    for method in ("random", "size", "semb:stub", "feature", "unigram", "max"):
        assert f"| {method} |" in text
    plots = sorted((mini_fixture / "out" / "plots").glob("*.csv"))
    assert [p.name for p in plots] == ["tgt0.csv", "tgt1.csv", "tgt2.csv"]
    body = plots[0].read_text().splitlines()
    assert body[0] == "method,ndcg"
    assert len(body) == 7  # header + one row per method


def test_report_without_metrics_fails(mini_fixture, capsys):
    rc = cli.main(
        ["report", "--config", str(mini_fixture / "config.json"), "--out",
         str(mini_fixture / "empty")]
    )
    assert rc == 2
    assert "run eval first" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------

def test_config_rejects_unknown_method():
    with pytest.raises(ConfigError):
        RunConfig(
            manifest_path=Path("m"),
            transfer_table_path=Path("t"),
            methods=("bogus",),
        )
    with pytest.raises(ConfigError):
        RunConfig(
            manifest_path=Path("m"),
            transfer_table_path=Path("t"),
            methods=(),
        )


def test_config_file_roundtrip_and_overrides(mini_fixture):
    config = RunConfig.from_file(mini_fixture / "config.json")
    assert config.manifest_path == mini_fixture / "manifest.json"
    assert config.methods == ("random", "size", "semb:stub", "feature", "unigram", "max")
    replaced = config.replace(k_values=(2,), master_seed=1)
    assert replaced.k_values == (2,) and replaced.master_seed == 1


def test_config_unknown_key_rejected(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(
        json.dumps(
            {
                "manifest_path": "m.json",
                "transfer_table_path": "t.csv",
                "methods": ["max"],
                "bogus_knob": 3,
            }
        )
    )
    with pytest.raises(ConfigError, match="bogus_knob"):
        RunConfig.from_file(path)


def test_cli_exit_codes(tmp_path, capsys):
    # config error -> 2
    rc = cli.main(["rank", "--manifest", "x", "--table", "y"])
    assert rc == 2
    # data error (missing manifest) -> 3
    rc = cli.main(
        ["rank", "--manifest", str(tmp_path / "no.json"), "--table",
         str(tmp_path / "no.csv"), "--methods", "max"]
    )
    assert rc == 3


def test_checkpoint_step_policy_changes_embeddings(tmp_path):
    # two steps; the later checkpoint flips which source matches the target
    root = tmp_path / "ws"
    root.mkdir()
    (root / "tensors").mkdir()
    tasks, artifacts = [], []
    mats = {
        ("a", 5000): [[1.0, 0.0]],
        ("a", 30000): [[0.0, 1.0]],
        ("b", 5000): [[0.0, 1.0]],
        ("b", 30000): [[1.0, 0.0]],
        ("t", 5000): [[1.0, 0.0]],
        ("t", 30000): [[1.0, 0.0]],
    }
    for (tid, step), data in mats.items():
        rel = f"tensors/{tid}_{step}.ptns"
        save_prompt_matrix(make_matrix(tid, np.array(data), 42, step), root / rel)
        artifacts.append(
            {"task_id": tid, "kind": "prompt", "seed": 42, "step": step, "path": rel}
        )
    for tid in ("a", "b", "t"):
        tasks.append(
            {
                "id": tid,
                "name": tid,
                "category": "QA",
                "train_size": 10,
                "role": "Target" if tid == "t" else "Source",
            }
        )
    (root / "manifest.json").write_text(
        json.dumps({"tasks": tasks, "artifacts": artifacts}), "utf-8"
    )
    (root / "transfer.csv").write_text(
        "source,target,seed,score\na,t,1,60\nb,t,1,50\n__none__,t,1,40\n", "utf-8"
    )
    base = RunConfig(
        manifest_path=root / "manifest.json",
        transfer_table_path=root / "transfer.csv",
        methods=("feature",),
        k_values=(1,),
    )
    ws_latest = load_workspace(base)  # latest step: b matches t
    ws_early = load_workspace(base.replace(checkpoint_step=5000))
    from taskrank.pipeline import predicted_ranking

    assert predicted_ranking(ws_latest, "feature", "t").source_ids()[0] == "b"
    assert predicted_ranking(ws_early, "feature", "t").source_ids()[0] == "a"
