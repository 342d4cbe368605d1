"""Nearest-neighbor datastore over whitened token embeddings.

Entries are (key, tag, provenance) triples held columnar. Keys, whitening
parameters, and centroids are quantized to f32 at build time so the
in-memory store and its serialized form (NDS1) are bit-identical, and a
query equal to a stored raw embedding reaches distance exactly 0.

Distances are squared Euclidean, computed per entry in float64 with a fixed
per-row accumulation, so exact search and clustered search agree bitwise on
any entry they both touch. Ties are broken by lower entry index.

Serialized layout (NDS1, little-endian):

    magic "NDS1" | version u32 (=1) | flags u32 | dim u32 | entry count u64
    config    use_whitening u8 | ncentroids u32 | nprobe u32
              | kmeans_iters u32 | seed u64
    sources   count u16, then per source: length u16 + UTF-8 bytes
    whitening (flags bit 0) mu dim x f32 | w row-major dim*dim x f32
    entries   per entry: key dim x f32 | value u8 | source u16
              | sentence u32 | token u32
    centroids (flags bit 1) count u32 | centroids count*dim x f32
              | per-entry assignment u32
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .corpus import LabelTag, Sentence
from .errors import (
    CorruptFile,
    DimensionMismatch,
    EmptyInput,
    EmptyStore,
    IoFailure,
    MagicMismatch,
    NoCentroids,
    NonFiniteInput,
    VersionMismatch,
)
from .whitening import WhiteningModel, apply_whitening, fit_whitening

MAGIC = b"NDS1"
VERSION = 1
_FLAG_WHITENING = 1
_FLAG_CENTROIDS = 2


@dataclass
class DatastoreConfig:
    use_whitening: bool = True
    ncentroids: int = 4096        # clamped to <= n_entries // 4 at build
    nprobe: int = 32              # clamped to <= trained centroid count at query
    kmeans_iters: int = 25
    seed: int = 0

    def __post_init__(self):
        if self.ncentroids < 1:
            raise ValueError("ncentroids must be positive")
        if self.nprobe < 1:
            raise ValueError("nprobe must be positive")
        if self.kmeans_iters < 1:
            raise ValueError("kmeans_iters must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass(eq=False)
class Neighbor:
    entry_index: int
    distance: float
    value: LabelTag
    source: str


@dataclass(eq=False)
class DatastoreEntry:
    key: np.ndarray
    value: LabelTag
    source: str
    sentence: int
    token: int


def _kmeans(points: np.ndarray, k: int, iters: int, seed: int) -> np.ndarray:
    """Plain k-means with k-means++ seeding and a fixed iteration count.

    Empty clusters are repaired each round by reseeding the centroid to the
    point farthest from its own nearest centroid. Fully deterministic for a
    given seed.
    """
    n = points.shape[0]
    rng = np.random.default_rng(seed)
    sq = np.einsum("nd,nd->n", points, points)

    centroids = np.empty((k, points.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = points[first]
    d2 = np.maximum(sq - 2.0 * (points @ centroids[0]) + centroids[0] @ centroids[0], 0.0)
    for j in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[j] = points[idx]
        dj = np.maximum(sq - 2.0 * (points @ centroids[j]) + centroids[j] @ centroids[j], 0.0)
        d2 = np.minimum(d2, dj)

    for _ in range(iters):
        d = sq[:, None] - 2.0 * (points @ centroids.T) + np.einsum("kd,kd->k", centroids, centroids)[None, :]
        assign = np.argmin(d, axis=1)
        counts = np.bincount(assign, minlength=k)
        sums = np.zeros_like(centroids)
        np.add.at(sums, assign, points)
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            own = d[np.arange(n), assign].copy()
            for j in empty:
                far = int(np.argmax(own))
                centroids[j] = points[far]
                own[far] = -np.inf
            nonempty = counts > 0
            centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
        else:
            centroids = sums / counts[:, None]
    return centroids


class Datastore:
    """Columnar entry table plus optional whitening model and IVF centroids."""

    def __init__(
        self,
        keys: np.ndarray,
        values: np.ndarray,
        source_table: Sequence[str],
        source_index: np.ndarray,
        positions: np.ndarray,
        config: DatastoreConfig,
        whitening: WhiteningModel | None = None,
        centroids: np.ndarray | None = None,
        assignments: np.ndarray | None = None,
    ):
        self.keys = np.ascontiguousarray(keys, dtype=np.float32)
        self.values = np.asarray(values, dtype=np.uint8)
        self.source_table = tuple(source_table)
        self.source_index = np.asarray(source_index, dtype=np.uint16)
        self.positions = np.asarray(positions, dtype=np.uint32)
        self.config = config
        self.whitening = whitening
        self.centroids = None if centroids is None else np.ascontiguousarray(centroids, dtype=np.float32)
        self.assignments = None if assignments is None else np.asarray(assignments, dtype=np.uint32)
        n = self.keys.shape[0]
        if not (len(self.values) == len(self.source_index) == len(self.positions) == n):
            raise ValueError("column lengths disagree")
        self._members: list[np.ndarray] | None = None

    def __len__(self) -> int:
        return int(self.keys.shape[0])

    @property
    def dim(self) -> int:
        return int(self.keys.shape[1])

    def entry(self, i: int) -> DatastoreEntry:
        return DatastoreEntry(
            key=self.keys[i],
            value=LabelTag(int(self.values[i])),
            source=self.source_table[int(self.source_index[i])],
            sentence=int(self.positions[i, 0]),
            token=int(self.positions[i, 1]),
        )

    def entries(self) -> Iterator[DatastoreEntry]:
        for i in range(len(self)):
            yield self.entry(i)

    def members(self) -> list[np.ndarray]:
        """Entry indices per centroid; every entry appears in exactly one list."""
        if self.assignments is None:
            raise NoCentroids("store was built without centroids")
        if self._members is None:
            order = np.argsort(self.assignments, kind="stable")
            bounds = np.searchsorted(self.assignments[order], np.arange(self.centroids.shape[0] + 1))
            self._members = [order[bounds[c]:bounds[c + 1]] for c in range(self.centroids.shape[0])]
        return self._members

    # --- search ---

    def _prep_query(self, query) -> np.ndarray:
        q = np.asarray(query, dtype=np.float64)
        if q.shape != (self.dim,):
            raise DimensionMismatch(f"query shape {q.shape} != ({self.dim},)")
        if not np.all(np.isfinite(q)):
            raise NonFiniteInput("query holds NaN or Inf")
        if self.whitening is not None:
            q = apply_whitening(self.whitening, q)
        # Quantize like stored keys so query==stored raw key gives distance 0.
        return q.astype(np.float32).astype(np.float64)

    def _distances(self, idx: np.ndarray | None, q: np.ndarray) -> np.ndarray:
        rows = self.keys if idx is None else self.keys[idx]
        diff = rows.astype(np.float64) - q
        return np.einsum("nd,nd->n", diff, diff)

    def _exact_arrays(self, query, k: int) -> tuple[np.ndarray, np.ndarray]:
        if len(self) == 0:
            raise EmptyStore("store holds no entries")
        if k < 1:
            raise ValueError("k must be positive")
        q = self._prep_query(query)
        d = self._distances(None, q)
        order = np.lexsort((np.arange(len(self)), d))[: min(k, len(self))]
        return order.astype(np.int64), d[order]

    def _clustered_arrays(self, query, k: int) -> tuple[np.ndarray, np.ndarray]:
        if len(self) == 0:
            raise EmptyStore("store holds no entries")
        if k < 1:
            raise ValueError("k must be positive")
        if self.centroids is None:
            raise NoCentroids("store was built without centroids")
        q = self._prep_query(query)
        cdiff = self.centroids.astype(np.float64) - q
        cd = np.einsum("nd,nd->n", cdiff, cdiff)
        n_c = self.centroids.shape[0]
        nprobe = min(self.config.nprobe, n_c)
        probe = np.lexsort((np.arange(n_c), cd))[:nprobe]
        members = self.members()
        cand = np.concatenate([members[c] for c in probe])
        d = self._distances(cand, q)
        order = np.lexsort((cand, d))[: min(k, cand.size)]
        return cand[order].astype(np.int64), d[order]

    def _wrap(self, idx: np.ndarray, dist: np.ndarray) -> list[Neighbor]:
        return [
            Neighbor(
                entry_index=int(i),
                distance=float(dd),
                value=LabelTag(int(self.values[i])),
                source=self.source_table[int(self.source_index[i])],
            )
            for i, dd in zip(idx, dist)
        ]

    def exact_search(self, query, k: int) -> list[Neighbor]:
        """Top-k neighbors by squared L2 over the full entry table."""
        return self._wrap(*self._exact_arrays(query, k))

    def clustered_search(self, query, k: int) -> list[Neighbor]:
        """Top-k among entries in the nprobe nearest centroid cells.

        Returns up to k neighbors from the scanned cells; with nprobe equal
        to the centroid count this is identical to exact_search.
        """
        return self._wrap(*self._clustered_arrays(query, k))

    def provenance_counts(self, queries, k: int) -> dict[str, int]:
        """Tally which source dataset retrieved neighbors come from.

        Runs clustered retrieval once per query; an empty query list yields
        an all-zero map over the store's sources.
        """
        counts = {sid: 0 for sid in self.source_table}
        for q in queries:
            idx, _ = self._clustered_arrays(q, k)
            for i in idx:
                counts[self.source_table[int(self.source_index[i])]] += 1
        return counts

    # --- serialization ---

    def save(self, path) -> None:
        """Write the store; deterministic bytes for identical content."""
        n, dim = self.keys.shape
        flags = 0
        if self.whitening is not None:
            flags |= _FLAG_WHITENING
        if self.centroids is not None:
            flags |= _FLAG_CENTROIDS
        parts = [
            MAGIC,
            struct.pack("<IIIQ", VERSION, flags, dim, n),
            struct.pack(
                "<BIIIQ",
                int(self.config.use_whitening),
                self.config.ncentroids,
                self.config.nprobe,
                self.config.kmeans_iters,
                self.config.seed,
            ),
            struct.pack("<H", len(self.source_table)),
        ]
        for sid in self.source_table:
            raw = sid.encode("utf-8")
            parts.append(struct.pack("<H", len(raw)))
            parts.append(raw)
        if self.whitening is not None:
            parts.append(np.ascontiguousarray(self.whitening.mu, dtype="<f4").tobytes())
            parts.append(np.ascontiguousarray(self.whitening.w, dtype="<f4").tobytes())
        rec = np.zeros(n, dtype=_entry_dtype(dim))
        rec["key"] = self.keys
        rec["value"] = self.values
        rec["source"] = self.source_index
        rec["sentence"] = self.positions[:, 0]
        rec["token"] = self.positions[:, 1]
        parts.append(rec.tobytes())
        if self.centroids is not None:
            parts.append(struct.pack("<I", self.centroids.shape[0]))
            parts.append(np.ascontiguousarray(self.centroids, dtype="<f4").tobytes())
            parts.append(np.asarray(self.assignments, dtype="<u4").tobytes())
        blob = b"".join(parts)
        tmp = f"{path}.tmp.{os.getpid()}"
        try:
            with open(tmp, "wb") as f:
                f.write(blob)
            os.replace(tmp, path)
        except OSError as e:
            raise IoFailure(str(e)) from e
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)


def _entry_dtype(dim: int) -> np.dtype:
    return np.dtype(
        [
            ("key", "<f4", (dim,)),
            ("value", "u1"),
            ("source", "<u2"),
            ("sentence", "<u4"),
            ("token", "<u4"),
        ]
    )


def build_datastore(
    streams: Sequence[tuple[str, Sequence[Sentence]]],
    config: DatastoreConfig | None = None,
) -> Datastore:
    """Build a store from (dataset_id, sentences) streams.

    Keys are whitened (model fitted on the union of all streams) unless
    config.use_whitening is off, then quantized to f32. Centroids are
    trained on the stored keys with ncentroids clamped to n // 4.
    """
    config = config or DatastoreConfig()
    table: list[str] = []
    vecs: list[np.ndarray] = []
    values: list[int] = []
    src_idx: list[int] = []
    positions: list[tuple[int, int]] = []
    dim: int | None = None
    for dataset_id, sentences in streams:
        if dataset_id in table:
            s_i = table.index(dataset_id)
        else:
            table.append(dataset_id)
            s_i = len(table) - 1
        for sent_i, sent in enumerate(sentences):
            for tok_i, tok in enumerate(sent.tokens):
                emb = np.asarray(tok.embedding, dtype=np.float64)
                if dim is None:
                    dim = int(emb.shape[-1])
                if emb.shape != (dim,):
                    raise DimensionMismatch(
                        f"stream {dataset_id!r} holds a {emb.shape} embedding, expected ({dim},)"
                    )
                vecs.append(emb)
                values.append(int(tok.gold))
                src_idx.append(s_i)
                positions.append((sent_i, tok_i))
    if not vecs:
        raise EmptyInput("no tokens across input streams")
    if len(table) > 0xFFFF:
        raise ValueError("too many source datasets")

    raw = np.vstack(vecs)
    if not np.all(np.isfinite(raw)):
        raise NonFiniteInput("input embeddings hold NaN or Inf")
    n = raw.shape[0]

    whitening = None
    if config.use_whitening:
        fitted = fit_whitening(raw)
        whitening = WhiteningModel(
            mu=fitted.mu.astype(np.float32),
            w=fitted.w.astype(np.float32),
        )
        keys = apply_whitening(whitening, raw).astype(np.float32)
    else:
        keys = raw.astype(np.float32)

    n_c = min(config.ncentroids, max(1, n // 4))
    centroids64 = _kmeans(keys.astype(np.float64), n_c, config.kmeans_iters, config.seed)
    centroids = centroids64.astype(np.float32)
    # Final assignment against the quantized centroids seen at query time.
    pts = keys.astype(np.float64)
    d = (
        np.einsum("nd,nd->n", pts, pts)[:, None]
        - 2.0 * (pts @ centroids.astype(np.float64).T)
        + np.einsum("kd,kd->k", centroids.astype(np.float64), centroids.astype(np.float64))[None, :]
    )
    assignments = np.argmin(d, axis=1).astype(np.uint32)

    return Datastore(
        keys=keys,
        values=np.asarray(values, dtype=np.uint8),
        source_table=table,
        source_index=np.asarray(src_idx, dtype=np.uint16),
        positions=np.asarray(positions, dtype=np.uint32),
        config=config,
        whitening=whitening,
        centroids=centroids,
        assignments=assignments,
    )


class _Cursor:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, nbytes: int) -> memoryview:
        if self.pos + nbytes > len(self.buf):
            raise CorruptFile(
                f"truncated store: wanted {nbytes} bytes at offset {self.pos}, "
                f"have {len(self.buf) - self.pos}"
            )
        out = memoryview(self.buf)[self.pos:self.pos + nbytes]
        self.pos += nbytes
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_datastore(path) -> Datastore:
    try:
        with open(path, "rb") as f:
            buf = f.read()
    except OSError as e:
        raise IoFailure(str(e)) from e
    cur = _Cursor(buf)
    if bytes(cur.take(4)) != MAGIC:
        raise MagicMismatch(f"{path}: not a datastore file")
    version, flags, dim, n = cur.unpack("<IIIQ")
    if version != VERSION:
        raise VersionMismatch(f"unsupported store version {version}")
    use_w, ncentroids, nprobe, iters, seed = cur.unpack("<BIIIQ")
    config = DatastoreConfig(
        use_whitening=bool(use_w),
        ncentroids=ncentroids,
        nprobe=nprobe,
        kmeans_iters=iters,
        seed=seed,
    )
    (n_sources,) = cur.unpack("<H")
    table = []
    for _ in range(n_sources):
        (slen,) = cur.unpack("<H")
        try:
            table.append(bytes(cur.take(slen)).decode("utf-8"))
        except UnicodeDecodeError as e:
            raise CorruptFile(f"undecodable source id: {e}") from e

    whitening = None
    if flags & _FLAG_WHITENING:
        mu = np.frombuffer(cur.take(4 * dim), dtype="<f4").copy()
        w = np.frombuffer(cur.take(4 * dim * dim), dtype="<f4").reshape(dim, dim).copy()
        whitening = WhiteningModel(mu=mu, w=w)

    rec = np.frombuffer(cur.take(_entry_dtype(dim).itemsize * n), dtype=_entry_dtype(dim))
    keys = rec["key"].reshape(n, dim).copy()
    values = rec["value"].copy()
    source_index = rec["source"].copy()
    positions = np.stack([rec["sentence"], rec["token"]], axis=1).astype(np.uint32)
    if values.size and int(values.max()) > 2:
        raise CorruptFile("entry tag byte out of range")
    if source_index.size and int(source_index.max()) >= max(1, len(table)):
        raise CorruptFile("entry source index out of range")

    centroids = None
    assignments = None
    if flags & _FLAG_CENTROIDS:
        (n_c,) = cur.unpack("<I")
        centroids = np.frombuffer(cur.take(4 * n_c * dim), dtype="<f4").reshape(n_c, dim).copy()
        assignments = np.frombuffer(cur.take(4 * n), dtype="<u4").copy()
        if assignments.size and int(assignments.max()) >= n_c:
            raise CorruptFile("entry assignment out of range")
    if cur.pos != len(buf):
        raise CorruptFile(f"{len(buf) - cur.pos} trailing bytes")
    return Datastore(
        keys=keys,
        values=values,
        source_table=table,
        source_index=source_index,
        positions=positions,
        config=config,
        whitening=whitening,
        centroids=centroids,
        assignments=assignments,
    )
