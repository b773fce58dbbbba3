"""Batch feature extraction glue emitting EMB1 embedding files."""

__version__ = "0.1.0"

from .emb1 import Emb1Error, read_emb1, validate_emb1, write_emb1  # noqa: F401
from .export import (  # noqa: F401
    ExportError,
    ExportJob,
    ExportResult,
    export_image_embeddings,
    export_text_embeddings,
)
from .models import get_model  # noqa: F401
