"""Bridge from a token-classification encoder to ETS1 token streams."""

from .conll import CorpusError, map_tags, read_conll, read_tag_map
from .etswrite import write_ets
from .export import ExportConfig, export

__version__ = "0.1.0"

__all__ = [
    "CorpusError",
    "ExportConfig",
    "export",
    "map_tags",
    "read_conll",
    "read_tag_map",
    "write_ets",
]
