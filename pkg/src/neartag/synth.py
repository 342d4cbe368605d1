"""Seeded synthetic corpora with controllable retrieval difficulty.

Skill types are drawn from a Zipf distribution, so surface frequencies form
a long tail. Each skill type owns one Gaussian embedding centroid per span
position (the B position and each I position get their own), which keeps
positions separable as cluster_spread shrinks; background (O) tokens come
from a unit Gaussian near the origin while skill centroids sit on a wider
shell. Base distributions are the gold one-hot with probability
(1 - base_noise) and otherwise place their argmax on a random wrong tag.
All probability values are small dyadic rationals, so they survive the f32
round trip through the token-stream format unchanged.

The same seed always produces byte-identical serialized corpora.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Sequence

import numpy as np

from .corpus import LabelTag, Sentence, TokenRecord

_CENTROID_SCALE = 2.0
_SPAN_LENGTHS = (1, 2, 3)
_SPAN_LENGTH_PROBS = (0.5, 0.3, 0.2)
_MAX_SPAN = max(_SPAN_LENGTHS)
_FILLER_VOCAB = 400
_CORRUPT_WRONG = 10 / 16   # dyadic: wrong tag's mass after corruption
_CORRUPT_REST = 3 / 16


@dataclass
class SynthConfig:
    dim: int = 16
    n_train_sentences: int = 200
    n_test_sentences: int = 50
    tokens_per_sentence: int = 12
    cluster_spread: float = 0.1
    base_noise: float = 0.2
    skill_vocab_size: int = 50
    zipf_exponent: float = 1.5
    seed: int = 0
    dataset_id: str = "synth"

    def __post_init__(self):
        for name in ("dim", "n_train_sentences", "n_test_sentences",
                     "tokens_per_sentence", "skill_vocab_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.tokens_per_sentence < _MAX_SPAN:
            raise ValueError(f"tokens_per_sentence must be >= {_MAX_SPAN}")
        if not self.cluster_spread > 0.0:
            raise ValueError("cluster_spread must be positive")
        if not 0.0 <= self.base_noise <= 1.0:
            raise ValueError("base_noise must lie in [0, 1]")
        if not self.zipf_exponent > 0.0:
            raise ValueError("zipf_exponent must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


class _TypeBank:
    """Span lengths, surfaces, and per-position centroids for skill types."""

    def __init__(self, n_types: int, dim: int, rng: np.random.Generator):
        self.lengths = rng.choice(_SPAN_LENGTHS, size=n_types, p=_SPAN_LENGTH_PROBS)
        self.centroids = rng.normal(size=(n_types, _MAX_SPAN, dim)) * _CENTROID_SCALE
        self.surfaces = [
            [f"sk{t}{'abc'[j]}" for j in range(int(self.lengths[t]))]
            for t in range(n_types)
        ]


def _zipf_cdf(n_types: int, exponent: float) -> np.ndarray:
    w = (np.arange(1, n_types + 1, dtype=np.float64)) ** (-exponent)
    return np.cumsum(w / w.sum())


def _one_hot(tag: int) -> np.ndarray:
    p = np.zeros(3, dtype=np.float64)
    p[tag] = 1.0
    return p


def _corrupted(gold: int, rng: np.random.Generator) -> np.ndarray:
    wrong = [t for t in range(3) if t != gold][int(rng.integers(2))]
    p = np.full(3, _CORRUPT_REST, dtype=np.float64)
    p[wrong] = _CORRUPT_WRONG
    return p


def _base_for(gold: int, noise: float, rng: np.random.Generator) -> np.ndarray:
    if noise > 0.0 and rng.random() < noise:
        return _corrupted(gold, rng)
    return _one_hot(gold)


def _sentence_skeleton(
    cfg: SynthConfig,
    bank: _TypeBank,
    zipf_cdf: np.ndarray,
    type_offset: int,
    rng: np.random.Generator,
) -> list[tuple[str, LabelTag, np.ndarray, int | None]]:
    """One sentence as (text, gold, embedding, local_type or None) tuples."""
    n_tok = cfg.tokens_per_sentence
    n_spans = 1 + int(rng.random() < 0.5)
    occupied = np.zeros(n_tok, dtype=bool)
    placed: list[tuple[int, int]] = []  # (start, local_type)
    for _ in range(n_spans):
        local_t = int(np.searchsorted(zipf_cdf, rng.random(), side="right"))
        local_t = min(local_t, len(zipf_cdf) - 1)
        bank_t = type_offset + local_t
        length = int(bank.lengths[bank_t])
        starts = [
            s for s in range(n_tok - length + 1)
            if not occupied[s:s + length].any()
        ]
        if not starts:
            continue
        start = starts[int(rng.integers(len(starts)))]
        occupied[start:start + length] = True
        placed.append((start, local_t))

    by_pos: dict[int, tuple[int, int]] = {}
    for start, local_t in placed:
        length = int(bank.lengths[type_offset + local_t])
        for j in range(length):
            by_pos[start + j] = (local_t, j)

    out = []
    for i in range(n_tok):
        if i in by_pos:
            local_t, j = by_pos[i]
            bank_t = type_offset + local_t
            text = bank.surfaces[bank_t][j]
            gold = LabelTag.B if j == 0 else LabelTag.I
            emb = bank.centroids[bank_t, j] + rng.normal(size=cfg.dim) * cfg.cluster_spread
            out.append((text, gold, emb, local_t))
        else:
            text = f"w{int(rng.integers(_FILLER_VOCAB))}"
            emb = rng.normal(size=cfg.dim)
            out.append((text, LabelTag.O, emb, None))
    return out


def generate(config: SynthConfig) -> tuple[list[Sentence], list[Sentence]]:
    """Return (train, test) sentence lists for one dataset."""
    rng = np.random.default_rng(config.seed)
    bank = _TypeBank(config.skill_vocab_size, config.dim, rng)
    cdf = _zipf_cdf(config.skill_vocab_size, config.zipf_exponent)

    def block(n: int) -> list[Sentence]:
        sentences = []
        for _ in range(n):
            skel = _sentence_skeleton(config, bank, cdf, 0, rng)
            tokens = [
                TokenRecord(text, gold, emb, _base_for(int(gold), config.base_noise, rng))
                for text, gold, emb, _ in skel
            ]
            sentences.append(Sentence(tokens, config.dataset_id))
        return sentences

    return block(config.n_train_sentences), block(config.n_test_sentences)


@dataclass(eq=False)
class TransferCorpus:
    """Paired datasets over a shared embedding space with per-model views.

    train[ds] holds ds's training sentences under its own model.
    test_views[(model_ds, eval_ds)] holds eval_ds's test sentences with base
    distributions as the model trained on model_ds would produce them:
    accurate (up to base_noise) on skill types it shares with eval_ds,
    mostly blind (predicting O) on types it has never seen.
    """
    datasets: list[str]
    train: dict[str, list[Sentence]]
    test_views: dict[tuple[str, str], list[Sentence]]


def generate_transfer(
    config: SynthConfig,
    dataset_ids: Sequence[str] = ("dsa", "dsb"),
    type_overlap: float = 0.3,
    unseen_miss: float = 0.9,
) -> TransferCorpus:
    """Build datasets whose skill vocabularies only partially overlap."""
    if not 0.0 <= type_overlap <= 1.0:
        raise ValueError("type_overlap must lie in [0, 1]")
    n_ds = len(dataset_ids)
    v = config.skill_vocab_size
    n_shared = int(round(type_overlap * v))
    stride = v - n_shared
    bank_rng = np.random.default_rng(config.seed)
    bank = _TypeBank(stride * (n_ds - 1) + v, config.dim, bank_rng)
    cdf = _zipf_cdf(v, config.zipf_exponent)

    offsets = {ds: i * stride for i, ds in enumerate(dataset_ids)}
    type_sets = {
        ds: set(range(offsets[ds], offsets[ds] + v)) for ds in dataset_ids
    }

    skeletons: dict[tuple[str, str], list] = {}
    for i, ds in enumerate(dataset_ids):
        rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(1, i)))
        skeletons[(ds, "train")] = [
            _sentence_skeleton(config, bank, cdf, offsets[ds], rng)
            for _ in range(config.n_train_sentences)
        ]
        skeletons[(ds, "test")] = [
            _sentence_skeleton(config, bank, cdf, offsets[ds], rng)
            for _ in range(config.n_test_sentences)
        ]

    def view(model_ds: str, eval_ds: str, split: str, key: tuple) -> list[Sentence]:
        rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=key))
        known = type_sets[model_ds]
        offset = offsets[eval_ds]
        sentences = []
        for skel in skeletons[(eval_ds, split)]:
            tokens = []
            for text, gold, emb, local_t in skel:
                seen = local_t is None or (offset + local_t) in known
                if seen:
                    base = _base_for(int(gold), config.base_noise, rng)
                elif rng.random() < unseen_miss:
                    base = _one_hot(int(LabelTag.O))
                else:
                    base = _base_for(int(gold), config.base_noise, rng)
                tokens.append(TokenRecord(text, gold, emb, base))
            sentences.append(Sentence(tokens, eval_ds))
        return sentences

    train = {
        ds: view(ds, ds, "train", (2, i))
        for i, ds in enumerate(dataset_ids)
    }
    test_views = {
        (m, e): view(m, e, "test", (3, mi, ei))
        for mi, m in enumerate(dataset_ids)
        for ei, e in enumerate(dataset_ids)
    }
    return TransferCorpus(list(dataset_ids), train, test_views)


# --- flat key=value config files ---

def parse_config_file(path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def config_from_mapping(mapping: dict[str, str], base: SynthConfig | None = None) -> SynthConfig:
    cfg = base or SynthConfig()
    by_name = {f.name: f for f in fields(SynthConfig)}
    updates = {}
    for key, value in mapping.items():
        if key not in by_name:
            raise ValueError(f"unknown config key {key!r}")
        typ = by_name[key].type
        if typ == "int":
            updates[key] = int(value)
        elif typ == "float":
            updates[key] = float(value)
        else:
            updates[key] = value
    return replace(cfg, **updates)
