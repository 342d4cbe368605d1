"""Minimal writer for the ETS1 token-stream wire format.

Layout (little-endian): magic "ETS1", u32 version (1), u32 embedding dim,
u32 label count (3), u16 dataset-id byte length + UTF-8 bytes, u64
sentence count; each sentence is a u32 token count followed by its tokens;
each token is u16 text byte length + UTF-8 bytes, u8 gold tag ordinal
(O=0, B=1, I=2), dim float32 embedding values, then 3 float32 base
probabilities in (O, B, I) order.
"""
from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

MAGIC = b"ETS1"
VERSION = 1
TAG_ORDINAL = {"O": 0, "B": 1, "I": 2}


def write_ets(path, dataset_id: str, dim: int, sentences) -> None:
    """sentences: iterable of [(text, tag, embedding, base), ...] tokens.

    `tag` is "O"/"B"/"I", `embedding` a (dim,) array, `base` a (3,) array
    in (O, B, I) order. Values are stored as float32. The file appears
    atomically or not at all.
    """
    body = bytearray()
    ds_bytes = dataset_id.encode("utf-8")
    if len(ds_bytes) > 0xFFFF:
        raise ValueError("dataset id too long")
    sentence_blobs: list[bytes] = []
    for sentence in sentences:
        if not sentence:
            raise ValueError("sentences must contain at least one token")
        parts = [struct.pack("<I", len(sentence))]
        for text, tag, embedding, base in sentence:
            text_bytes = text.encode("utf-8")
            if not text_bytes:
                raise ValueError("token text must be non-empty")
            if len(text_bytes) > 0xFFFF:
                raise ValueError("token text too long")
            emb = np.ascontiguousarray(embedding, dtype="<f4")
            if emb.shape != (dim,):
                raise ValueError(f"embedding shape {emb.shape} != ({dim},)")
            dist = np.ascontiguousarray(base, dtype="<f4")
            if dist.shape != (3,):
                raise ValueError("base distribution must have 3 entries")
            parts.append(struct.pack("<H", len(text_bytes)))
            parts.append(text_bytes)
            parts.append(struct.pack("<B", TAG_ORDINAL[tag]))
            parts.append(emb.tobytes())
            parts.append(dist.tobytes())
        sentence_blobs.append(b"".join(parts))

    body += MAGIC
    body += struct.pack("<III", VERSION, dim, 3)
    body += struct.pack("<H", len(ds_bytes))
    body += ds_bytes
    body += struct.pack("<Q", len(sentence_blobs))
    for blob in sentence_blobs:
        body += blob

    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ets-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(bytes(body))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
