"""Tensor discovery inside framework-native checkpoints.

Supported containers: PyTorch state dicts (.pt / .pth / .bin, needs torch)
and NumPy archives (.npz). Nested state dicts are flattened with dotted
names. Discovery is by regex against the flattened names; no match and
multiple matches are both errors that list what was found, never a silent
guess.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .errors import ShapeUnexpected, TensorAmbiguous, TensorNotFound, UnsupportedCheckpoint

#: Matches the usual prompt-tuning parameter names: "prompt", "soft_prompt",
#: "prompt_embeddings", each optionally nested and/or suffixed ".weight".
DEFAULT_TENSOR_PATTERN = r"(?:^|\.)(?:soft_)?prompt(?:_?embeddings?)?(?:\.weight)?$"


def _flatten(obj, prefix: str, out: dict[str, np.ndarray]) -> None:
    if isinstance(obj, dict):
        for key, value in obj.items():
            name = f"{prefix}.{key}" if prefix else str(key)
            _flatten(value, name, out)
        return
    arr = _to_array(obj)
    if arr is not None:
        out[prefix] = arr


def _to_array(obj) -> np.ndarray | None:
    if isinstance(obj, np.ndarray):
        return obj
    # torch tensors expose .detach/.cpu/.numpy; duck-type so numpy-only
    # installs never import torch
    if hasattr(obj, "detach") and hasattr(obj, "cpu") and hasattr(obj, "numpy"):
        return obj.detach().cpu().numpy()
    return None


def load_checkpoint_tensors(path: str | Path) -> dict[str, np.ndarray]:
    """All named arrays in the checkpoint, flattened to dotted names."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".npz":
        with np.load(path) as archive:
            return {name: archive[name] for name in archive.files}
    if suffix in (".pt", ".pth", ".bin"):
        try:
            import torch
        except ImportError as exc:
            raise UnsupportedCheckpoint(
                f"{path}: reading {suffix} checkpoints requires torch"
            ) from exc
        state = torch.load(path, map_location="cpu", weights_only=True)
        tensors: dict[str, np.ndarray] = {}
        _flatten(state, "", tensors)
        return tensors
    raise UnsupportedCheckpoint(
        f"{path}: unsupported checkpoint suffix {suffix!r} "
        f"(expected .pt, .pth, .bin or .npz)"
    )


def find_prompt_tensor(
    tensors: dict[str, np.ndarray],
    pattern: str = DEFAULT_TENSOR_PATTERN,
    source: str = "checkpoint",
) -> tuple[str, np.ndarray]:
    """The unique 2-D tensor whose name matches the pattern."""
    rx = re.compile(pattern)
    matches = sorted(name for name in tensors if rx.search(name))
    if not matches:
        raise TensorNotFound(
            f"{source}: no tensor name matches {pattern!r}; "
            f"available: {sorted(tensors)}"
        )
    if len(matches) > 1:
        raise TensorAmbiguous(
            f"{source}: pattern {pattern!r} matches several tensors: {matches}; "
            f"narrow it with --tensor-pattern"
        )
    name = matches[0]
    arr = np.asarray(tensors[name])
    if arr.ndim != 2:
        raise ShapeUnexpected(
            f"{source}: tensor {name!r} has shape {arr.shape}, expected a 2-D "
            f"token x feature matrix"
        )
    if not np.all(np.isfinite(arr)):
        raise ShapeUnexpected(f"{source}: tensor {name!r} contains non-finite entries")
    return name, arr
