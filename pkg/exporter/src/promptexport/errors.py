"""Exporter failure modes."""

from __future__ import annotations


class ExportError(Exception):
    """Base class for exporter errors."""


class TensorNotFound(ExportError):
    """No checkpoint tensor matches the name pattern; lists available names."""


class TensorAmbiguous(ExportError):
    """Several checkpoint tensors match the name pattern; lists candidates."""


class ShapeUnexpected(ExportError):
    """The matched tensor is not the expected N x d matrix."""


class UnsupportedCheckpoint(ExportError):
    """Checkpoint container format is not readable."""


class EmptyDataset(ExportError):
    """The text dataset has no examples to encode."""


class EncoderFailure(ExportError):
    """The sentence encoder could not be constructed or run."""
