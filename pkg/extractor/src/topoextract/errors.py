class ExtractorError(Exception):
    """Base class for extractor errors."""


class DecodeError(ExtractorError):
    """An image or video input could not be decoded."""


class ModelLoadError(ExtractorError):
    """The backbone identifier could not be resolved to usable weights."""
