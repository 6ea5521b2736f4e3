"""Video/image frontend producing descriptor streams for the mapping engine."""

from .backbone import Backbone
from .errors import DecodeError, ExtractorError, ModelLoadError
from .extractor import ExtractorConfig, FrameExtractor, write_records
from .vlad import VladVocabulary, kmeans

__version__ = "0.1.0"

__all__ = [
    "Backbone",
    "DecodeError",
    "ExtractorConfig",
    "ExtractorError",
    "FrameExtractor",
    "ModelLoadError",
    "VladVocabulary",
    "kmeans",
    "write_records",
]
