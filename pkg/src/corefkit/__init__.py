"""corefkit: an end-to-end coreference resolution engine with pluggable
higher-order inference, trained over externally supplied token embeddings,
plus the CoNLL-2012 evaluation and impact-analysis toolchain."""

__version__ = "0.1.0"

from .config import Config
from .corpus import Document, Segment, parse_conll, segment_document
from .model import CorefModel

__all__ = ["Config", "CorefModel", "Document", "Segment", "parse_conll", "segment_document", "__version__"]
