"""Sentence encoders behind a minimal interface.

An encoder is anything with an ``encoder_id`` string and an
``encode(texts) -> (len(texts), dim) float array`` method. Tests run with
the deterministic stub; real runs can use sentence-transformers models
without the exporter knowing the difference.
"""

from __future__ import annotations

import hashlib
from typing import Protocol, Sequence

import numpy as np

from .errors import EncoderFailure


class Encoder(Protocol):
    encoder_id: str

    def encode(self, texts: Sequence[str]) -> np.ndarray: ...


class StubEncoder:
    """Deterministic text-hash encoder; no model, no download, stable output."""

    def __init__(self, dim: int = 8):
        if dim < 1:
            raise EncoderFailure(f"stub encoder dim must be >= 1, got {dim}")
        self.dim = dim
        self.encoder_id = f"stub-{dim}"

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        out = np.empty((len(texts), self.dim), dtype=np.float64)
        for i, text in enumerate(texts):
            digest = hashlib.sha256(text.encode("utf-8")).digest()
            seed = int.from_bytes(digest[:8], "little")
            out[i] = np.random.default_rng(seed).standard_normal(self.dim)
        return out


class SentenceTransformerEncoder:
    """Wraps a sentence-transformers model (lazy import, optional dependency)."""

    def __init__(self, model_name: str):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise EncoderFailure(
                "sentence-transformers is not installed; "
                "use the 'sbert' extra or a stub encoder"
            ) from exc
        try:
            self._model = SentenceTransformer(model_name)
        except Exception as exc:
            raise EncoderFailure(f"cannot load encoder {model_name!r}: {exc}") from exc
        self.encoder_id = f"sbert-{model_name.rsplit('/', 1)[-1]}"

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        return np.asarray(
            self._model.encode(list(texts), convert_to_numpy=True), dtype=np.float64
        )


def get_encoder(spec: str) -> Encoder:
    """Build an encoder from a CLI spec: "stub[:dim]" or "sbert:<model>"."""
    kind, _, arg = spec.partition(":")
    if kind == "stub":
        return StubEncoder(int(arg) if arg else 8)
    if kind == "sbert":
        if not arg:
            raise EncoderFailure("sbert encoder needs a model name: sbert:<model>")
        return SentenceTransformerEncoder(arg)
    raise EncoderFailure(f"unknown encoder spec {spec!r} (expected stub[:dim] or sbert:<model>)")
