"""Label fusion: turn retrieved neighbors into a tag distribution and blend
it with the base model's distribution.

The neighbor distribution weights each retrieved entry by exp(-d / T) and
sums weights per tag; tags absent from the neighbor list get probability
exactly 0.0. The minimum distance is subtracted before exponentiating --
the shift cancels in normalization and keeps tiny temperatures from
underflowing every weight.

The blend is a convex combination p = lam * p_knn + (1 - lam) * p_base, so
lam = 0.0 and lam = 1.0 reproduce the respective inputs bit-for-bit.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import LabelTag, N_LABELS, Sentence
from .datastore import Datastore, Neighbor
from .errors import EmptyNeighborList, LambdaOutOfRange

MODES = ("exact", "clustered")


@dataclass
class FusionParams:
    k: int
    lam: float          # weight on the neighbor distribution
    temperature: float

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be positive")
        if not 0.0 <= self.lam <= 1.0:
            raise LambdaOutOfRange(f"lambda {self.lam!r} outside [0, 1]")
        if not self.temperature > 0.0:
            raise ValueError("temperature must be positive")


def _mass(dists: np.ndarray, labels: np.ndarray, temperature: float) -> np.ndarray:
    w = np.exp(-(dists - dists.min()) / temperature)
    p = np.zeros(N_LABELS, dtype=np.float64)
    np.add.at(p, labels, w)
    return p / p.sum()


def knn_distribution(neighbors: Sequence[Neighbor], temperature: float) -> np.ndarray:
    """Distribution (O, B, I) over tags carried by the retrieved neighbors."""
    if not neighbors:
        raise EmptyNeighborList("no neighbors to aggregate")
    if not temperature > 0.0:
        raise ValueError("temperature must be positive")
    dists = np.array([n.distance for n in neighbors], dtype=np.float64)
    labels = np.array([int(n.value) for n in neighbors], dtype=np.intp)
    return _mass(dists, labels, temperature)


def knn_mass_batch(dists: np.ndarray, labels: np.ndarray, temperature: float) -> np.ndarray:
    """Vectorized _mass over rows: (n, k) distances/labels -> (n, 3)."""
    w = np.exp(-(dists - dists.min(axis=1, keepdims=True)) / temperature)
    p = np.empty((dists.shape[0], N_LABELS), dtype=np.float64)
    for lbl in range(N_LABELS):
        p[:, lbl] = np.where(labels == lbl, w, 0.0).sum(axis=1)
    return p / p.sum(axis=1, keepdims=True)


def interpolate(p_knn: np.ndarray, p_base: np.ndarray, lam: float) -> np.ndarray:
    if not 0.0 <= lam <= 1.0:
        raise LambdaOutOfRange(f"lambda {lam!r} outside [0, 1]")
    a = np.asarray(p_knn, dtype=np.float64)
    b = np.asarray(p_base, dtype=np.float64)
    if a.shape != (N_LABELS,) or b.shape != (N_LABELS,):
        raise ValueError("distributions must have shape (3,)")
    return lam * a + (1.0 - lam) * b


def infer_sentence(
    store: Datastore,
    sentence: Sentence,
    params: FusionParams,
    mode: str = "exact",
) -> list[tuple[LabelTag, np.ndarray]]:
    """Fused tag and distribution for every token of a sentence.

    Argmax ties resolve to the lowest tag ordinal (O < B < I). With
    lam == 0 retrieval is skipped; the blend reduces to the base
    distribution either way.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    search = store._exact_arrays if mode == "exact" else store._clustered_arrays
    out: list[tuple[LabelTag, np.ndarray]] = []
    for tok in sentence.tokens:
        if params.lam == 0.0:
            p = np.asarray(tok.base, dtype=np.float64).copy()
        else:
            idx, d = search(tok.embedding, params.k)
            p_knn = _mass(d, store.values[idx].astype(np.intp), params.temperature)
            p = interpolate(p_knn, tok.base, params.lam)
        out.append((LabelTag(int(np.argmax(p))), p))
    return out


def repair_bio(tags: Sequence[LabelTag | int]) -> list[LabelTag]:
    """Rewrite any I that does not continue a span to B. Idempotent."""
    out: list[LabelTag] = []
    in_span = False
    for t in tags:
        t = LabelTag(int(t))
        if t == LabelTag.I and not in_span:
            t = LabelTag.B
        out.append(t)
        in_span = t != LabelTag.O
    return out
