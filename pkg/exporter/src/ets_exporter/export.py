"""Encode a labeled corpus into a token stream.

One output record per corpus word: the final-layer hidden state of the
word's first subword, the softmax of the classification logits at that
position, and the corpus gold tag. Sentences whose subword length exceeds
the budget are split into overlapping windows; a word's embedding always
comes from the first window that contains it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .conll import CorpusError, map_tags, read_conll, read_tag_map
from .etswrite import write_ets

WINDOW_OVERLAP = 16
SPECIAL_TOKENS = 2          # leading and trailing marker added per window


@dataclass
class ExportConfig:
    model: str
    corpus: str
    out: str
    dataset_id: str = "corpus"
    max_length: int = 128
    batch_size: int = 8
    tag_map: str | None = None

    def __post_init__(self):
        if self.max_length < SPECIAL_TOKENS + 1:
            raise ValueError("max_length leaves no room for content tokens")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if not self.dataset_id:
            raise ValueError("dataset_id must be non-empty")


def _label_order(id2label: dict) -> list[int]:
    """Model output column for each wire ordinal (O, B, I).

    When the model names its labels O/B/I (any case) the columns are
    permuted accordingly; otherwise positions are taken to already mean
    (O, B, I).
    """
    names = {str(name).strip().upper(): int(idx) for idx, name in id2label.items()}
    if set(names) == {"O", "B", "I"}:
        return [names["O"], names["B"], names["I"]]
    return [0, 1, 2]


def _windows(subword_counts: list[int], budget: int, lines: list[int]) -> list[tuple[int, int]]:
    """Word-index ranges [start, end) covering the sentence in order."""
    for count, lineno in zip(subword_counts, lines):
        if count > budget:
            raise CorpusError(
                f"line {lineno}: single token spans {count} subwords, "
                f"over the {budget} content budget; raise max_length"
            )
    out: list[tuple[int, int]] = []
    start = 0
    n = len(subword_counts)
    while start < n:
        used = 0
        end = start
        while end < n and used + subword_counts[end] <= budget:
            used += subword_counts[end]
            end += 1
        out.append((start, end))
        if end == n:
            break
        start = max(start + 1, end - WINDOW_OVERLAP)
    return out


def export(config: ExportConfig) -> dict:
    """Run the encoder over the corpus and write the token stream.

    Returns a small summary: sentence count, token count, embedding dim.
    """
    from transformers import AutoModelForTokenClassification, AutoTokenizer

    mapping = read_tag_map(config.tag_map) if config.tag_map else None
    sentences = map_tags(read_conll(config.corpus), mapping, config.corpus)

    tokenizer = AutoTokenizer.from_pretrained(config.model)
    model = AutoModelForTokenClassification.from_pretrained(config.model)
    model.eval()
    dim = int(model.config.hidden_size)
    if int(model.config.num_labels) != 3:
        raise CorpusError(
            f"model has {model.config.num_labels} labels, need 3 (O, B, I)"
        )
    order = _label_order(model.config.id2label or {})

    if not sentences:
        write_ets(config.out, config.dataset_id, dim, [])
        return {"sentences": 0, "tokens": 0, "dim": dim}

    budget = config.max_length - SPECIAL_TOKENS

    # plan windows: (sentence index, word start, word end)
    plan: list[tuple[int, int, int]] = []
    for si, sentence in enumerate(sentences):
        words = [tok for tok, _, _ in sentence]
        lines = [lineno for _, _, lineno in sentence]
        probe = tokenizer(words, is_split_into_words=True, add_special_tokens=False)
        counts = [0] * len(words)
        for wid in probe.word_ids(0):
            if wid is not None:
                counts[wid] += 1
        if 0 in counts:
            bad = counts.index(0)
            raise CorpusError(
                f"{config.corpus}:{lines[bad]}: token {words[bad]!r} "
                "produced no subwords"
            )
        for start, end in _windows(counts, budget, lines):
            plan.append((si, start, end))

    n_words = [len(s) for s in sentences]
    embeddings: list[list[np.ndarray | None]] = [[None] * n for n in n_words]
    bases: list[list[np.ndarray | None]] = [[None] * n for n in n_words]

    with torch.no_grad():
        for lo in range(0, len(plan), config.batch_size):
            batch = plan[lo : lo + config.batch_size]
            word_lists = [
                [tok for tok, _, _ in sentences[si][start:end]]
                for si, start, end in batch
            ]
            enc = tokenizer(
                word_lists,
                is_split_into_words=True,
                padding=True,
                return_tensors="pt",
            )
            out = model(**enc, output_hidden_states=True)
            hidden = out.hidden_states[-1]
            probs = torch.softmax(out.logits, dim=-1)
            for bi, (si, start, end) in enumerate(batch):
                first_pos: dict[int, int] = {}
                for pos, wid in enumerate(enc.word_ids(bi)):
                    if wid is not None and wid not in first_pos:
                        first_pos[wid] = pos
                for local in range(end - start):
                    word_index = start + local
                    if embeddings[si][word_index] is not None:
                        continue  # an earlier window already owns this word
                    pos = first_pos[local]
                    embeddings[si][word_index] = (
                        hidden[bi, pos].to(torch.float32).numpy().copy()
                    )
                    bases[si][word_index] = (
                        probs[bi, pos, order].to(torch.float32).numpy().copy()
                    )

    records = []
    n_tokens = 0
    for si, sentence in enumerate(sentences):
        row = []
        for wi, (token, tag, _) in enumerate(sentence):
            row.append((token, tag, embeddings[si][wi], bases[si][wi]))
            n_tokens += 1
        records.append(row)
    write_ets(config.out, config.dataset_id, dim, records)
    return {"sentences": len(records), "tokens": n_tokens, "dim": dim}
