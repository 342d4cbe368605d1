"""Core value types for labeled token sequences.

A token carries its surface text, a gold BIO tag, a contextual embedding,
and the base model's probability distribution over the three tags.
Distributions are ordered (O, B, I) everywhere; the tag ordinals below are
load-bearing because argmax ties resolve to the lowest ordinal.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

N_LABELS = 3
TAG_CHARS = "OBI"


class LabelTag(IntEnum):
    O = 0
    B = 1
    I = 2


def tag_from_char(ch: str) -> LabelTag:
    try:
        return LabelTag(TAG_CHARS.index(ch))
    except ValueError:
        raise ValueError(f"unknown tag character {ch!r}") from None


def as_distribution(values) -> np.ndarray:
    """Validate a probability triple ordered (O, B, I) and return it as float64."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (N_LABELS,):
        raise ValueError(f"distribution must have shape ({N_LABELS},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("distribution has non-finite entries")
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError("distribution entries must lie in [0, 1]")
    if abs(float(arr.sum()) - 1.0) > 1e-6:
        raise ValueError(f"distribution sums to {arr.sum()!r}, expected 1")
    return arr


@dataclass(eq=False)
class TokenRecord:
    text: str
    gold: LabelTag
    embedding: np.ndarray  # shape (dim,), float64 in memory, float32 on disk
    base: np.ndarray       # shape (3,), probabilities ordered (O, B, I)

    def __post_init__(self):
        if not self.text:
            raise ValueError("token text must be non-empty")
        self.gold = LabelTag(self.gold)


@dataclass(eq=False)
class Sentence:
    tokens: list[TokenRecord] = field(default_factory=list)
    dataset_id: str = ""

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("sentence must hold at least one token")

    def __len__(self) -> int:
        return len(self.tokens)

    def tags(self) -> list[LabelTag]:
        return [t.gold for t in self.tokens]

    def texts(self) -> list[str]:
        return [t.text for t in self.tokens]
