"""Binary token-stream serialization (ETS1).

Layout, little-endian throughout:

    header   magic "ETS1" | version u32 (=1) | dim u32 | label count u32 (=3)
             | dataset-id length u16 + UTF-8 bytes | sentence count u64
    sentence token count u32, then per token:
             text length u16 + UTF-8 bytes | gold tag u8
             | dim x f32 embedding | 3 x f32 base distribution (O, B, I)

One file holds one dataset; the header's dataset id is assigned to every
sentence on read. A file may hold zero sentences. Embeddings are truncated
to f32 on write. Base distributions are re-normalized on read when their
stored sum is within 1e-4 of 1 and rejected otherwise.
"""
from __future__ import annotations

import os
import struct
from typing import Sequence

import numpy as np

from .corpus import LabelTag, N_LABELS, Sentence, TokenRecord
from .errors import (
    BadDistribution,
    CorruptRecord,
    IoFailure,
    MagicMismatch,
    MixedDatasetIds,
    MixedDimensions,
    VersionMismatch,
)

MAGIC = b"ETS1"
VERSION = 1

_U16_MAX = 0xFFFF
_DIST_SUM_TOL = 1e-4


def write_token_stream(sentences: Sequence[Sentence], path) -> None:
    """Serialize sentences to `path`. All-or-nothing: written via a temp file."""
    sentences = list(sentences)
    dim = 0
    dataset_id = ""
    if sentences:
        dataset_id = sentences[0].dataset_id
        dim = int(sentences[0].tokens[0].embedding.shape[-1])
    for s in sentences:
        if s.dataset_id != dataset_id:
            raise MixedDatasetIds(
                f"stream holds one dataset; got {dataset_id!r} and {s.dataset_id!r}"
            )
        for t in s.tokens:
            if t.embedding.shape != (dim,):
                raise MixedDimensions(
                    f"embedding dim {t.embedding.shape} != ({dim},)"
                )

    ds_bytes = dataset_id.encode("utf-8")
    if len(ds_bytes) > _U16_MAX:
        raise ValueError("dataset id longer than 65535 bytes")

    tmp = f"{path}.tmp.{os.getpid()}"
    try:
        with open(tmp, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<IIIH", VERSION, dim, N_LABELS, len(ds_bytes)))
            f.write(ds_bytes)
            f.write(struct.pack("<Q", len(sentences)))
            for s in sentences:
                parts = [struct.pack("<I", len(s.tokens))]
                for t in s.tokens:
                    text = t.text.encode("utf-8")
                    if len(text) > _U16_MAX:
                        raise ValueError("token text longer than 65535 bytes")
                    parts.append(struct.pack("<H", len(text)))
                    parts.append(text)
                    parts.append(struct.pack("<B", int(t.gold)))
                    parts.append(np.asarray(t.embedding, dtype="<f4").tobytes())
                    parts.append(np.asarray(t.base, dtype="<f4").tobytes())
                f.write(b"".join(parts))
        os.replace(tmp, path)
    except OSError as e:
        raise IoFailure(str(e)) from e
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


class _Cursor:
    """Bounds-checked reader over a bytes buffer."""

    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> memoryview:
        if self.pos + n > len(self.buf):
            raise CorruptRecord(
                f"truncated file: wanted {n} bytes at offset {self.pos}, "
                f"have {len(self.buf) - self.pos}"
            )
        out = memoryview(self.buf)[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_stream_header(path) -> tuple[int, str, int]:
    """Return (dim, dataset_id, sentence_count) without parsing the body."""
    try:
        with open(path, "rb") as f:
            head = f.read(18 + _U16_MAX + 8)
    except OSError as e:
        raise IoFailure(str(e)) from e
    cur = _Cursor(head)
    if bytes(cur.take(4)) != MAGIC:
        raise MagicMismatch(f"{path}: not a token-stream file")
    version, dim, n_labels, ds_len = cur.unpack("<IIIH")
    if version != VERSION:
        raise VersionMismatch(f"unsupported stream version {version}")
    if n_labels != N_LABELS:
        raise CorruptRecord(f"label count {n_labels} != {N_LABELS}")
    dataset_id = _decode_text(cur.take(ds_len))
    (n_sentences,) = cur.unpack("<Q")
    return dim, dataset_id, n_sentences


def _decode_text(raw: memoryview) -> str:
    try:
        return bytes(raw).decode("utf-8")
    except UnicodeDecodeError as e:
        raise CorruptRecord(f"undecodable text field: {e}") from e


def read_token_stream(path) -> list[Sentence]:
    try:
        with open(path, "rb") as f:
            buf = f.read()
    except OSError as e:
        raise IoFailure(str(e)) from e

    cur = _Cursor(buf)
    if bytes(cur.take(4)) != MAGIC:
        raise MagicMismatch(f"{path}: not a token-stream file")
    version, dim, n_labels, ds_len = cur.unpack("<IIIH")
    if version != VERSION:
        raise VersionMismatch(f"unsupported stream version {version}")
    if n_labels != N_LABELS:
        raise CorruptRecord(f"label count {n_labels} != {N_LABELS}")
    dataset_id = _decode_text(cur.take(ds_len))
    (n_sentences,) = cur.unpack("<Q")

    sentences: list[Sentence] = []
    for si in range(n_sentences):
        (n_tokens,) = cur.unpack("<I")
        if n_tokens == 0:
            raise CorruptRecord(f"sentence {si} holds zero tokens")
        tokens = []
        for ti in range(n_tokens):
            (text_len,) = cur.unpack("<H")
            text = _decode_text(cur.take(text_len))
            (gold,) = cur.unpack("<B")
            if not text:
                raise CorruptRecord(f"empty token text at sentence {si} token {ti}")
            if gold >= N_LABELS:
                raise CorruptRecord(f"tag byte {gold} out of range at sentence {si} token {ti}")
            emb = np.frombuffer(cur.take(4 * dim), dtype="<f4").astype(np.float64)
            if not np.all(np.isfinite(emb)):
                raise CorruptRecord(f"non-finite embedding at sentence {si} token {ti}")
            base = np.frombuffer(cur.take(4 * N_LABELS), dtype="<f4").astype(np.float64)
            total = float(base.sum())
            if abs(total - 1.0) > _DIST_SUM_TOL or np.any(base < 0.0):
                raise BadDistribution(
                    f"base distribution sums to {total!r} at sentence {si} token {ti}"
                )
            base = base / total
            tokens.append(TokenRecord(text, LabelTag(gold), emb, base))
        sentences.append(Sentence(tokens, dataset_id))

    if cur.pos != len(buf):
        raise CorruptRecord(f"{len(buf) - cur.pos} trailing bytes after last sentence")
    return sentences
