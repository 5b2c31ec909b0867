"""Pipeline orchestration: config, validation, ranking, evaluation, reports.

A run is parameterized by a :class:`RunConfig` (JSON file, every field
overridable from the CLI). The orchestrator loads artifacts once into an
immutable :class:`Workspace`, fans per-(target, method) work out to a
bounded thread pool, and gathers results into a canonical order before
serialization, so output bytes never depend on scheduling. Floats are
serialized with Python's shortest round-trip repr; identical config and
inputs reproduce every output file byte for byte.
"""

from __future__ import annotations

import dataclasses
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import ranking as rk
from . import similarity as sim
from .errors import (
    ConfigError,
    DimensionMismatch,
    MissingArtifact,
    MissingMetrics,
    TaskRankError,
)
from .rng import derive_seed
from .tensor_io import (
    CATEGORIES,
    Manifest,
    PromptMatrix,
    Ranking,
    SentenceEmbeddingVec,
    TransferTable,
    load_manifest,
    load_prompt_matrix,
    load_semb_vector,
    load_transfer_table,
)

__version__ = "0.1.0"

SIMPLE_METHODS = ("random", "size", "feature", "unigram", "max")
EMBEDDING_METHODS = ("feature", "unigram", "max")  # prompt-weight methods
THREADS_ENV = "TASKRANK_THREADS"

DEFAULT_TRIALS = 10000
DEFAULT_MASTER_SEED = 0xDCB0


def _is_semb(method: str) -> bool:
    return method.startswith("semb:") and len(method) > 5


def _check_method(method: str) -> None:
    if method not in SIMPLE_METHODS and not _is_semb(method):
        raise ConfigError(
            f"unknown method {method!r}; expected one of {SIMPLE_METHODS} "
            f"or 'semb:<encoder_id>'"
        )


@dataclass(frozen=True)
class RunConfig:
    """Everything a pipeline run depends on besides the artifacts themselves."""

    manifest_path: Path
    transfer_table_path: Path
    methods: tuple[str, ...]
    checkpoint_step: int | str = "latest"
    prompt_seed_policy: int | str = "lowest"
    transfer_seed_policy: int | str = rk.MEAN_OVER_SEEDS
    k_values: tuple[int, ...] = (1, 3)
    p: int | str = "all"
    monte_carlo_trials: int = DEFAULT_TRIALS
    master_seed: int = DEFAULT_MASTER_SEED
    output_dir: Path = Path("taskrank_out")

    def __post_init__(self):
        if not self.methods:
            raise ConfigError("methods must be nonempty")
        for m in self.methods:
            _check_method(m)
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("methods must be unique")
        if not self.k_values or any(k < 1 for k in self.k_values):
            raise ConfigError(f"k_values must all be >= 1, got {self.k_values}")
        if self.p != "all" and (not isinstance(self.p, int) or self.p < 1):
            raise ConfigError(f"p must be 'all' or a positive integer, got {self.p!r}")
        if self.checkpoint_step != "latest" and not isinstance(self.checkpoint_step, int):
            raise ConfigError(f"checkpoint_step must be 'latest' or int, got {self.checkpoint_step!r}")
        if self.prompt_seed_policy != "lowest" and not isinstance(self.prompt_seed_policy, int):
            raise ConfigError("prompt_seed_policy must be 'lowest' or int")
        if self.transfer_seed_policy != rk.MEAN_OVER_SEEDS and not isinstance(
            self.transfer_seed_policy, int
        ):
            raise ConfigError("transfer_seed_policy must be 'mean' or int")
        if self.monte_carlo_trials < 1:
            raise ConfigError("monte_carlo_trials must be >= 1")

    _FIELDS = (
        "manifest_path",
        "transfer_table_path",
        "methods",
        "checkpoint_step",
        "prompt_seed_policy",
        "transfer_seed_policy",
        "k_values",
        "p",
        "monte_carlo_trials",
        "master_seed",
        "output_dir",
    )

    @classmethod
    def from_dict(cls, doc: Mapping, base_dir: Path | None = None) -> "RunConfig":
        unknown = set(doc) - set(cls._FIELDS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("manifest_path", "transfer_table_path", "methods"):
            if key not in doc:
                raise ConfigError(f"config missing required key {key!r}")

        def respath(v: str) -> Path:
            p = Path(v)
            if base_dir is not None and not p.is_absolute():
                p = base_dir / p
            return p

        kwargs = dict(doc)
        kwargs["manifest_path"] = respath(str(doc["manifest_path"]))
        kwargs["transfer_table_path"] = respath(str(doc["transfer_table_path"]))
        kwargs["methods"] = tuple(doc["methods"])
        if "k_values" in doc:
            kwargs["k_values"] = tuple(int(k) for k in doc["k_values"])
        if "output_dir" in doc:
            kwargs["output_dir"] = respath(str(doc["output_dir"]))
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text("utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(doc, base_dir=path.parent)

    def replace(self, **kwargs) -> "RunConfig":
        return dataclasses.replace(self, **kwargs)

    def to_json_dict(self) -> dict:
        return {
            "manifest_path": str(self.manifest_path),
            "transfer_table_path": str(self.transfer_table_path),
            "methods": list(self.methods),
            "checkpoint_step": self.checkpoint_step,
            "prompt_seed_policy": self.prompt_seed_policy,
            "transfer_seed_policy": self.transfer_seed_policy,
            "k_values": list(self.k_values),
            "p": self.p,
            "monte_carlo_trials": self.monte_carlo_trials,
            "master_seed": self.master_seed,
            "output_dir": str(self.output_dir),
        }


def resolve_workers(explicit: int | None = None) -> int:
    """Worker-pool size: explicit arg, then TASKRANK_THREADS, then CPU count."""
    if explicit is not None:
        return max(1, explicit)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"{THREADS_ENV}={env!r} is not an integer") from exc
    return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# workspace
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Workspace:
    """Immutable loaded artifacts plus derived caches, shareable across threads."""

    config: RunConfig
    manifest: Manifest
    table: TransferTable
    prompts: Mapping[str, PromptMatrix]
    sembs: Mapping[tuple[str, str], SentenceEmbeddingVec]
    feature_vecs: Mapping[str, np.ndarray]
    unigram_vecs: Mapping[str, np.ndarray]
    unit_rows: Mapping[str, np.ndarray]

    def source_ids(self) -> tuple[str, ...]:
        return tuple(t.task_id for t in self.manifest.sources())

    def target_ids(self) -> tuple[str, ...]:
        return tuple(t.task_id for t in self.manifest.targets())

    def sources_for(self, target_id: str) -> tuple[str, ...]:
        return tuple(s for s in self.source_ids() if s != target_id)

    def resolved_p(self) -> int:
        n = len(self.source_ids())
        return n if self.config.p == "all" else min(int(self.config.p), n)


def _needed_encoders(methods: Sequence[str]) -> tuple[str, ...]:
    return tuple(sorted({m.split(":", 1)[1] for m in methods if _is_semb(m)}))


def load_workspace(config: RunConfig, workers: int | None = None) -> Workspace:
    """Load manifest, table, and every artifact the configured methods need.

    Tensor files load in parallel; caches (token-mean vectors, per-token
    means, unit rows) are derived once so ranking jobs are pure reads.
    """
    manifest = load_manifest(config.manifest_path)
    table = load_transfer_table(config.transfer_table_path)
    need_prompts = any(m in EMBEDDING_METHODS for m in config.methods)
    encoders = _needed_encoders(config.methods)
    task_ids = [t.task_id for t in manifest.tasks if t.is_source or t.is_target]

    prompt_jobs: list[tuple[str, Path]] = []
    if need_prompts:
        for tid in task_ids:
            ref = manifest.resolve_prompt(
                tid, config.prompt_seed_policy, config.checkpoint_step
            )
            prompt_jobs.append((tid, ref.path))
    semb_jobs: list[tuple[tuple[str, str], Path]] = []
    for enc in encoders:
        for tid in task_ids:
            ref = manifest.resolve_semb(tid, enc)
            semb_jobs.append(((tid, enc), ref.path))

    nworkers = resolve_workers(workers)
    prompts: dict[str, PromptMatrix] = {}
    sembs: dict[tuple[str, str], SentenceEmbeddingVec] = {}
    if nworkers > 1 and (prompt_jobs or semb_jobs):
        with ThreadPoolExecutor(max_workers=nworkers) as pool:
            for (tid, _), mat in zip(
                prompt_jobs, pool.map(lambda j: load_prompt_matrix(j[1]), prompt_jobs)
            ):
                prompts[tid] = mat
            for (key, _), vec in zip(
                semb_jobs, pool.map(lambda j: load_semb_vector(j[1]), semb_jobs)
            ):
                sembs[key] = vec
    else:
        for tid, path in prompt_jobs:
            prompts[tid] = load_prompt_matrix(path)
        for key, path in semb_jobs:
            sembs[key] = load_semb_vector(path)

    feature_vecs = {tid: m.data.mean(axis=0) for tid, m in prompts.items()}
    unigram_vecs = {tid: m.data.mean(axis=1) for tid, m in prompts.items()}
    unit_rows = (
        {tid: sim.normalized_rows(m) for tid, m in prompts.items()}
        if "max" in config.methods
        else {}
    )
    return Workspace(
        config=config,
        manifest=manifest,
        table=table,
        prompts=prompts,
        sembs=sembs,
        feature_vecs=feature_vecs,
        unigram_vecs=unigram_vecs,
        unit_rows=unit_rows,
    )


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def validate_workspace(config: RunConfig) -> list[str]:
    """Cross-check everything a run needs; returns ALL problems, not the first."""
    problems: list[str] = []
    try:
        manifest = load_manifest(config.manifest_path)
    except TaskRankError as exc:
        return [f"manifest: {exc}"]
    try:
        table = load_transfer_table(config.transfer_table_path)
    except TaskRankError as exc:
        return [f"transfer table: {exc}"]

    sources = manifest.sources()
    targets = manifest.targets()
    if not sources:
        problems.append(f"manifest {config.manifest_path}: no source tasks")
    if not targets:
        problems.append(f"manifest {config.manifest_path}: no target tasks")

    known = set(manifest.by_id)
    for sid in table.source_ids():
        if sid not in known:
            problems.append(
                f"transfer table {config.transfer_table_path}: source {sid!r} "
                f"not in manifest"
            )
    for tid in table.target_ids():
        if tid not in known:
            problems.append(
                f"transfer table {config.transfer_table_path}: target {tid!r} "
                f"not in manifest"
            )

    policy = config.transfer_seed_policy
    for tgt in targets:
        if not table.baseline_seeds(tgt.task_id):
            problems.append(
                f"transfer table: no no-transfer baseline for target {tgt.task_id!r}"
            )
        elif policy != rk.MEAN_OVER_SEEDS and (tgt.task_id, int(policy)) not in table.baselines:
            problems.append(
                f"transfer table: no baseline for target {tgt.task_id!r} "
                f"at seed {policy}"
            )
        for src in sources:
            if src.task_id == tgt.task_id:
                continue
            seeds = table.seeds_for(src.task_id, tgt.task_id)
            if not seeds:
                problems.append(
                    f"transfer table: no entry for ({src.task_id!r} -> {tgt.task_id!r})"
                )
            elif policy != rk.MEAN_OVER_SEEDS and int(policy) not in seeds:
                problems.append(
                    f"transfer table: no entry for ({src.task_id!r} -> "
                    f"{tgt.task_id!r}) at seed {policy}"
                )

    n_sources = len(sources)
    for k in config.k_values:
        if n_sources and k > n_sources:
            problems.append(f"k={k} exceeds the {n_sources} available sources")
    if config.p != "all" and n_sources and int(config.p) > n_sources:
        problems.append(f"p={config.p} exceeds the {n_sources} available sources")

    if "size" in config.methods:
        for t in sources:
            if t.train_size <= 0:
                problems.append(
                    f"size method: task {t.task_id!r} has train_size {t.train_size}"
                )

    need_prompts = any(m in EMBEDDING_METHODS for m in config.methods)
    shapes: dict[str, tuple[int, int]] = {}
    if need_prompts:
        for t in (*sources, *targets):
            try:
                ref = manifest.resolve_prompt(
                    t.task_id, config.prompt_seed_policy, config.checkpoint_step
                )
                mat = load_prompt_matrix(ref.path)
                shapes[t.task_id] = (mat.rows, mat.cols)
            except TaskRankError as exc:
                problems.append(f"prompt tensor for {t.task_id!r}: {exc}")
        if shapes:
            if len({c for _, c in shapes.values()}) > 1 and (
                "feature" in config.methods or "max" in config.methods
            ):
                problems.append(
                    "feature/max methods: feature dimension differs across tasks: "
                    + ", ".join(f"{t}={c}" for t, (_, c) in sorted(shapes.items()))
                )
            if len({r for r, _ in shapes.values()}) > 1 and "unigram" in config.methods:
                problems.append(
                    "unigram method: token count differs across tasks: "
                    + ", ".join(f"{t}={r}" for t, (r, _) in sorted(shapes.items()))
                )

    for enc in _needed_encoders(config.methods):
        dims: dict[str, int] = {}
        for t in (*sources, *targets):
            try:
                ref = manifest.resolve_semb(t.task_id, enc)
                vec = load_semb_vector(ref.path)
                dims[t.task_id] = vec.dim
            except TaskRankError as exc:
                problems.append(f"sentence vector for {t.task_id!r} ({enc}): {exc}")
        if dims and len(set(dims.values())) > 1:
            problems.append(
                f"semb:{enc}: vector dimension differs across tasks: "
                + ", ".join(f"{t}={d}" for t, d in sorted(dims.items()))
            )
    return problems


# ---------------------------------------------------------------------------
# ranking
# ---------------------------------------------------------------------------

def predicted_ranking(ws: Workspace, method: str, target_id: str) -> Ranking:
    """Ranking of all sources for one target under one method."""
    source_ids = ws.sources_for(target_id)
    if not source_ids:
        raise MissingArtifact(f"no sources available for target {target_id!r}")
    try:
        if method == "random":
            seed = derive_seed(ws.config.master_seed, "rank", target_id)
            return sim.random_ranking(source_ids, seed, target_id)
        if method == "size":
            scores = {
                sid: sim.size_score(ws.manifest.by_id[sid]) for sid in source_ids
            }
        elif method == "feature":
            tvec = ws.feature_vecs[target_id]
            scores = {
                sid: sim.cosine(ws.feature_vecs[sid], tvec) for sid in source_ids
            }
        elif method == "unigram":
            tvec = ws.unigram_vecs[target_id]
            for sid in source_ids:
                if ws.unigram_vecs[sid].shape != tvec.shape:
                    raise DimensionMismatch(
                        f"unigram: {sid!r} has N={ws.unigram_vecs[sid].shape[0]}, "
                        f"{target_id!r} has N={tvec.shape[0]}"
                    )
            scores = {
                sid: sim.cosine(ws.unigram_vecs[sid], tvec) for sid in source_ids
            }
        elif method == "max":
            tunit = ws.unit_rows[target_id]
            scores = {}
            for sid in source_ids:
                sunit = ws.unit_rows[sid]
                if sunit.shape[1] != tunit.shape[1]:
                    raise DimensionMismatch(
                        f"max: {sid!r} has d={sunit.shape[1]}, "
                        f"{target_id!r} has d={tunit.shape[1]}"
                    )
                scores[sid] = sim.max_directional(sunit, tunit)
        elif _is_semb(method):
            enc = method.split(":", 1)[1]
            tvec = ws.sembs[(target_id, enc)]
            scores = {
                sid: sim.semb_similarity(ws.sembs[(sid, enc)], tvec).value
                for sid in source_ids
            }
        else:
            raise ConfigError(f"unknown method {method!r}")
    except KeyError as exc:
        raise MissingArtifact(
            f"target {target_id!r}, method {method!r}: artifact for {exc} not loaded"
        ) from exc
    except TaskRankError as exc:
        raise type(exc)(f"target {target_id!r}, method {method!r}: {exc}") from exc
    return Ranking.from_scores(target_id, method, scores)


def compute_rankings(ws: Workspace, workers: int | None = None) -> list[Ranking]:
    """All (target, method) rankings, fanned out to a bounded pool.

    The result list is sorted by (target_id, method_id): scheduling order
    never shows in the output.
    """
    jobs = [
        (tid, m) for tid in sorted(ws.target_ids()) for m in sorted(ws.config.methods)
    ]
    nworkers = resolve_workers(workers)
    if nworkers <= 1 or len(jobs) <= 1:
        results = [predicted_ranking(ws, m, tid) for tid, m in jobs]
    else:
        with ThreadPoolExecutor(max_workers=nworkers) as pool:
            results = list(pool.map(lambda j: predicted_ranking(ws, j[1], j[0]), jobs))
    return sorted(results, key=lambda r: (r.target_id, r.method_id))


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def evaluate(
    ws: Workspace, rankings: Sequence[Ranking] | None = None, workers: int | None = None
) -> rk.EvalReport:
    """Score every configured method on every target and aggregate."""
    config = ws.config
    if rankings is None:
        rankings = compute_rankings(ws, workers)
    by_key = {(r.target_id, r.method_id): r for r in rankings}
    p = ws.resolved_p()
    k_values = tuple(sorted(config.k_values))

    warnings: list[str] = []
    per_target: dict[tuple[str, str], rk.MetricCell] = {}
    gains_acc: dict[tuple[str, int], list[rk.GainResult]] = {}
    baselines: list[float] = []

    def job(target_id: str) -> None:
        sources = ws.sources_for(target_id)
        truth, rel = rk.ground_truth_ranking(
            ws.table, target_id, sources, config.transfer_seed_policy
        )
        if rel.clamped:
            warnings.append(
                f"target {target_id!r}: negative relevance clamped to 0 for "
                f"sources {list(rel.clamped)}"
            )
        for method in config.methods:
            if method == "random":
                mc_seed = derive_seed(config.master_seed, "mc", target_id)
                nd, regret = rk.monte_carlo_random_metrics(
                    rel, k_values, config.monte_carlo_trials, mc_seed, p
                )
                per_target[(target_id, method)] = rk.MetricCell(nd, regret)
                g_seed = derive_seed(config.master_seed, "mc-gain", target_id)
                gains_acc.setdefault((method, 1), []).append(
                    rk.monte_carlo_random_gains(
                        ws.table, target_id, sources, 1,
                        config.monte_carlo_trials, g_seed,
                    )
                )
                continue
            pred = by_key[(target_id, method)]
            cell = rk.MetricCell(
                ndcg=rk.ndcg(pred, truth, rel, p),
                regret_at_k={k: rk.regret_at_k(pred, rel, k) for k in k_values},
            )
            per_target[(target_id, method)] = cell
            ks = (1,) if method == "size" else k_values
            for k in ks:
                gains_acc.setdefault((method, k), []).append(
                    rk.best_of_top_k(pred, ws.table, target_id, k)
                )
        baselines.append(ws.table.baseline_mean(target_id))

    # per-target jobs mutate disjoint keys; run them in a deterministic
    # sequence (the heavy parallelism lives in ranking, not here)
    for tid in sorted(ws.target_ids()):
        job(tid)

    transfer_gains = {
        key: rk.GainResult(
            abs_gain=float(np.mean([g.abs_gain for g in gs])),
            rel_gain_pct=float(np.mean([g.rel_gain_pct for g in gs])),
            score=float(np.mean([g.score for g in gs])),
        )
        for key, gs in gains_acc.items()
    }
    target_categories = {
        t.task_id: t.category for t in ws.manifest.targets()
    }
    return rk.aggregate_report(
        per_target=per_target,
        target_categories=target_categories,
        methods=list(config.methods),
        k_values=k_values,
        transfer_gains=transfer_gains,
        baseline_mean=float(np.mean(baselines)),
        p=p,
        monte_carlo_trials=config.monte_carlo_trials,
        master_seed=config.master_seed,
        warnings=sorted(warnings),
    )


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _dump_json(doc: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n", "utf-8", newline="\n"
    )


def write_rankings(rankings: Sequence[Ranking], path: Path) -> None:
    doc = {
        "rankings": [
            {
                "target_id": r.target_id,
                "method_id": r.method_id,
                "items": [{"source_id": sid, "score": score} for sid, score in r.items],
            }
            for r in sorted(rankings, key=lambda r: (r.target_id, r.method_id))
        ]
    }
    _dump_json(doc, path)


def write_metrics(report: rk.EvalReport, path: Path) -> None:
    _dump_json(report.to_json_dict(), path)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_summary_csv(
    report: rk.EvalReport, methods: Sequence[str], path: Path
) -> None:
    """Method x (category, All) grid of nDCG and Regret@k columns."""
    k_values = report.k_values
    header = ["method", "category", "ndcg"] + [f"regret_at_{k}" for k in k_values]
    cats_present = [c for c in CATEGORIES if any(c == cat for cat, _ in report.per_category)]
    lines = [",".join(header)]
    for method in methods:
        for cat in cats_present:
            cell = report.per_category[(cat, method)]
            lines.append(
                ",".join(
                    [method, cat, _fmt(cell.ndcg)]
                    + [_fmt(cell.regret_at_k[k]) for k in k_values]
                )
            )
        cell = report.overall[method]
        lines.append(
            ",".join(
                [method, "All", _fmt(cell.ndcg)]
                + [_fmt(cell.regret_at_k[k]) for k in k_values]
            )
        )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", "utf-8", newline="\n")


def write_gains_csv(report: rk.EvalReport, methods: Sequence[str], path: Path) -> None:
    """Best-of-top-k gain rows per method, plus the no-transfer reference row."""
    lines = ["method,k,abs_gain,rel_gain_pct,avg_score"]
    lines.append(f"no_transfer,,,,{_fmt(report.baseline_mean)}")
    for method in methods:
        ks = sorted(k for m, k in report.transfer_gains if m == method)
        for k in ks:
            g = report.transfer_gains[(method, k)]
            lines.append(
                f"{method},{k},{_fmt(g.abs_gain)},{_fmt(g.rel_gain_pct)},{_fmt(g.score)}"
            )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", "utf-8", newline="\n")


def write_run_meta(config: RunConfig, path: Path) -> None:
    _dump_json(
        {
            "tool": "taskrank",
            "version": __version__,
            "config": config.to_json_dict(),
        },
        path,
    )


def run_validate(config: RunConfig) -> tuple[list[str], str]:
    """validate subcommand body: (problems, one-line summary on success)."""
    problems = validate_workspace(config)
    summary = ""
    if not problems:
        manifest = load_manifest(config.manifest_path)
        summary = (
            f"OK, {len(manifest.sources())} sources, "
            f"{len(manifest.targets())} targets, {len(config.methods)} methods"
        )
    return problems, summary


def run_rank(config: RunConfig, workers: int | None = None) -> Path:
    """rank subcommand body: write rankings.json + run_meta.json."""
    ws = load_workspace(config, workers)
    rankings = compute_rankings(ws, workers)
    out = Path(config.output_dir)
    write_rankings(rankings, out / "rankings.json")
    write_run_meta(config, out / "run_meta.json")
    return out / "rankings.json"


def run_eval(config: RunConfig, workers: int | None = None) -> rk.EvalReport:
    """eval subcommand body: write the full report bundle."""
    ws = load_workspace(config, workers)
    rankings = compute_rankings(ws, workers)
    report = evaluate(ws, rankings, workers)
    out = Path(config.output_dir)
    write_rankings(rankings, out / "rankings.json")
    write_metrics(report, out / "metrics.json")
    write_summary_csv(report, config.methods, out / "summary.csv")
    write_gains_csv(report, config.methods, out / "gains.csv")
    write_run_meta(config, out / "run_meta.json")
    return report


# ---------------------------------------------------------------------------
# human-readable report
# ---------------------------------------------------------------------------

def render_report_markdown(metrics: Mapping) -> str:
    """Leaderboard plus per-category table rendered from a metrics.json dict."""
    overall = metrics["overall"]
    board = sorted(overall.items(), key=lambda kv: (-kv[1]["ndcg"], kv[0]))
    lines = ["# Task selection report", "", "## Method leaderboard (mean over targets)", ""]
    lines.append("| rank | method | nDCG | " + " | ".join(
        f"R@{k}" for k in metrics["k_values"]) + " |")
    lines.append("|---|---|---|" + "---|" * len(metrics["k_values"]))
    for pos, (method, cell) in enumerate(board, start=1):
        regrets = " | ".join(
            f"{cell['regret_at_k'][str(k)]:.4f}" for k in metrics["k_values"]
        )
        lines.append(f"| {pos} | {method} | {cell['ndcg']:.4f} | {regrets} |")

    lines += ["", "## Per-category mean nDCG", ""]
    categories = sorted(metrics["per_category"])
    methods = sorted(overall)
    lines.append("| method | " + " | ".join(categories) + " | All |")
    lines.append("|---|" + "---|" * (len(categories) + 1))
    for method in methods:
        row = [f"{metrics['per_category'][c][method]['ndcg']:.4f}" for c in categories]
        row.append(f"{overall[method]['ndcg']:.4f}")
        lines.append(f"| {method} | " + " | ".join(row) + " |")

    gains = metrics.get("transfer_gains", {})
    if gains:
        lines += ["", "## Best-of-top-k transfer gains", ""]
        lines.append("| method | k | abs | rel % | avg score |")
        lines.append("|---|---|---|---|---|")
        lines.append(
            f"| no_transfer | - | - | - | {metrics['no_transfer_avg_score']:.2f} |"
        )
        for method in sorted(gains):
            for k in sorted(gains[method], key=int):
                g = gains[method][k]
                lines.append(
                    f"| {method} | {k} | {g['abs_gain']:.2f} | "
                    f"{g['rel_gain_pct']:.2f} | {g['avg_score']:.2f} |"
                )
    if metrics.get("warnings"):
        lines += ["", "## Warnings", ""]
        lines += [f"- {w}" for w in metrics["warnings"]]
    return "\n".join(lines) + "\n"


def write_plot_data(metrics: Mapping, out_dir: Path) -> list[Path]:
    """One CSV per target with a method,ndcg row per method, for external plotting."""
    plot_dir = Path(out_dir) / "plots"
    plot_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for target_id in sorted(metrics["per_target"]):
        cells = metrics["per_target"][target_id]
        lines = ["method,ndcg"]
        for method in sorted(cells):
            lines.append(f"{method},{_fmt(cells[method]['ndcg'])}")
        path = plot_dir / f"{target_id}.csv"
        path.write_text("\n".join(lines) + "\n", "utf-8", newline="\n")
        written.append(path)
    return written


def run_report(config: RunConfig, plot_data: bool = False) -> Path:
    """report subcommand body: render report.md (and optional plot CSVs)."""
    metrics_path = Path(config.output_dir) / "metrics.json"
    if not metrics_path.is_file():
        raise MissingMetrics(f"no metrics at {metrics_path}; run eval first")
    metrics = json.loads(metrics_path.read_text("utf-8"))
    out = Path(config.output_dir) / "report.md"
    out.write_text(render_report_markdown(metrics), "utf-8", newline="\n")
    if plot_data:
        write_plot_data(metrics, Path(config.output_dir))
    return out
