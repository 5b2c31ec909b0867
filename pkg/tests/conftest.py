"""Shared test fixtures."""

from __future__ import annotations

import json
import warnings
from pathlib import Path

import numpy as np
import pytest

from taskrank.tensor_io import PromptMatrix, PromptShapeWarning


@pytest.fixture(autouse=True)
def _quiet_shape_warnings():
    # most tests use tiny matrices; the token-count warning is exercised
    # explicitly where it matters
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PromptShapeWarning)
        yield


def make_matrix(task_id: str, data, seed: int = 42, step: int = 30000) -> PromptMatrix:
    arr = np.asarray(data, dtype=np.float64)
    return PromptMatrix(task_id, seed, step, arr.shape[0], arr.shape[1], arr)


@pytest.fixture
def matrix_factory():
    return make_matrix


def write_manifest(path: Path, tasks: list[dict], artifacts: list[dict]) -> Path:
    path.write_text(
        json.dumps({"tasks": tasks, "artifacts": artifacts}, indent=2), "utf-8"
    )
    return path


def random_f32_matrix(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Random values that are exactly representable in f32."""
    return rng.standard_normal((rows, cols)).astype(np.float32).astype(np.float64)
