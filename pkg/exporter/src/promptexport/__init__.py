"""promptexport: soft-prompt checkpoints and text datasets -> PTNS artifacts."""

from .checkpoints import (
    DEFAULT_TENSOR_PATTERN,
    find_prompt_tensor,
    load_checkpoint_tensors,
)
from .encoders import Encoder, StubEncoder, get_encoder
from .errors import (
    EmptyDataset,
    EncoderFailure,
    ExportError,
    ShapeUnexpected,
    TensorAmbiguous,
    TensorNotFound,
)
from .exporter import (
    ExportJob,
    export_prompt,
    export_semb,
    mean_embedding,
    read_text_dataset,
)
from .ptns import write_ptns_atomic

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_TENSOR_PATTERN",
    "EmptyDataset",
    "Encoder",
    "EncoderFailure",
    "ExportError",
    "ExportJob",
    "ShapeUnexpected",
    "StubEncoder",
    "TensorAmbiguous",
    "TensorNotFound",
    "export_prompt",
    "export_semb",
    "find_prompt_tensor",
    "get_encoder",
    "load_checkpoint_tensors",
    "mean_embedding",
    "read_text_dataset",
    "write_ptns_atomic",
]
