"""PTNS tensor writing.

The consuming pipeline reads this exact layout::

    bytes 0..3   magic b"PTNS"
    bytes 4..5   u16 little-endian version (1)
    bytes 6..7   u16 little-endian header length H
    bytes 8..8+H UTF-8 JSON header with at least
                 {"task_id", "seed", "step", "rows", "cols"}
    then         rows*cols little-endian IEEE-754 f32, row-major, no padding

Writes are atomic: the payload lands in a temp file in the target directory
and is renamed into place.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

PTNS_MAGIC = b"PTNS"
PTNS_VERSION = 1


def ptns_bytes(header: dict, data: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(np.asarray(data), dtype="<f4")
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    if len(blob) > 0xFFFF:
        raise ValueError(f"header JSON of {len(blob)} bytes exceeds u16 length")
    return (
        PTNS_MAGIC
        + struct.pack("<HH", PTNS_VERSION, len(blob))
        + blob
        + arr.tobytes(order="C")
    )


def write_ptns_atomic(path: str | Path, header: dict, data: np.ndarray) -> Path:
    """Write-temp-then-rename so readers never observe a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = ptns_bytes(header, data)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise
    return path


def prompt_header(task_id: str, seed: int, step: int, rows: int, cols: int) -> dict:
    return {"task_id": task_id, "seed": seed, "step": step, "rows": rows, "cols": cols}


def semb_header(task_id: str, encoder_id: str, dim: int) -> dict:
    return {
        "task_id": task_id,
        "seed": 0,
        "step": 0,
        "rows": 1,
        "cols": dim,
        "kind": "semb",
        "encoder_id": encoder_id,
    }
