"""Frozen ViT image-folder feature extraction into EUDF files."""

from .backbone import EMBED_DIM
from .errors import ExtractError
from .pipeline import ExtractSpec, extract

__version__ = "1.0.0"

__all__ = ["EMBED_DIM", "ExtractError", "ExtractSpec", "extract"]
