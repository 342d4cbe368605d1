"""Retrieval-augmented BIO sequence labeling.

The pipeline: token streams carry contextual embeddings plus a base
model's tag distributions; a whitened nearest-neighbor datastore retrieves
similar training tokens; retrieval-derived tag distributions are blended
with the base distributions; span-level evaluation slices results by how
rare each span's surface is in training.

Submodules
----------
corpus      tag / token / sentence value types
stream      binary token-stream serialization (ETS1)
whitening   isotropic whitening of embedding sets
datastore   exact and inverted-file nearest-neighbor search (NDS1 files)
fusion      neighbor tag distributions and base-model blending
evaluation  span F1, frequency bins, set overlap, McNemar
synth       seeded synthetic corpora with a long-tail skill vocabulary
cli         command-line pipeline over the above
"""

from .corpus import LabelTag, Sentence, TokenRecord, as_distribution
from .datastore import (
    Datastore,
    DatastoreConfig,
    DatastoreEntry,
    Neighbor,
    build_datastore,
    load_datastore,
)
from .errors import EngineError
from .evaluation import (
    EvalReport,
    McNemarResult,
    Span,
    bin_for_count,
    extract_corpus_spans,
    extract_spans,
    frequency_bins,
    jaccard,
    mcnemar_token,
    normalize_surface,
    per_bin_f1,
    span_scores,
)
from .fusion import (
    FusionParams,
    infer_sentence,
    interpolate,
    knn_distribution,
    repair_bio,
)
from .stream import read_stream_header, read_token_stream, write_token_stream
from .synth import SynthConfig, TransferCorpus, generate, generate_transfer
from .whitening import WhiteningModel, apply_whitening, fit_whitening

__version__ = "0.1.0"

__all__ = [
    "LabelTag",
    "Sentence",
    "TokenRecord",
    "as_distribution",
    "Datastore",
    "DatastoreConfig",
    "DatastoreEntry",
    "Neighbor",
    "build_datastore",
    "load_datastore",
    "EngineError",
    "EvalReport",
    "McNemarResult",
    "Span",
    "bin_for_count",
    "extract_corpus_spans",
    "extract_spans",
    "frequency_bins",
    "jaccard",
    "mcnemar_token",
    "normalize_surface",
    "per_bin_f1",
    "span_scores",
    "FusionParams",
    "infer_sentence",
    "interpolate",
    "knn_distribution",
    "repair_bio",
    "read_stream_header",
    "read_token_stream",
    "write_token_stream",
    "SynthConfig",
    "TransferCorpus",
    "generate",
    "generate_transfer",
    "WhiteningModel",
    "apply_whitening",
    "fit_whitening",
    "__version__",
]
