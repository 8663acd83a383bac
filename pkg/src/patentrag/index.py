"""
Inner-product vector index with an optional inverted-file (IVF) partition.

Exact search scans every stored vector. After ``train_ivf`` the entries are
also partitioned into ``nlist`` k-means cells and ``search_ivf`` scans only the
``nprobe`` cells whose centroids score highest against the query.

Ranking rule for every search: larger inner product first, equal scores by
ascending doc_id.

File layout (all integers little-endian)::

    b"PVIX" | u16 version=1 | u32 dim | u64 count | u8 flags (bit0: has IVF)
    count x ( u32 id_len | id utf-8 | dim x f32 )
    [ u32 nlist | nlist*dim x f32 centroids | count x u32 list id ]
    u32 crc32 of everything above
"""

from __future__ import annotations

import os
import struct
import threading
import zlib
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from . import kmeans as _kmeans
from .errors import (
    BadK,
    BadNprobe,
    CorruptFile,
    DimensionMismatch,
    DuplicateDocId,
    EmptyIndex,
    IoFailure,
    NotTrained,
    TooFewVectors,
)

MAGIC = b"PVIX"
FORMAT_VERSION = 1
FLAG_IVF = 0x01
_HEADER = struct.Struct("<4sHIQB")
_SCORE_BLOCK = 8192


@dataclass(frozen=True)
class SearchHit:
    doc_id: str
    score: float
    rank: int

    def to_dict(self) -> dict:
        return {"doc_id": self.doc_id, "score": self.score, "rank": self.rank}


class VectorIndex:
    """Flat MIPS store plus optional IVF state.

    Mutation (``add``, ``train_ivf``) needs exclusive access; searches on an
    index that is no longer being mutated may run concurrently.
    """

    def __init__(self, dimension: int):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = int(dimension)
        self._ids: list[str] = []
        self._pos: dict[str, int] = {}
        self._rows: list[np.ndarray] = []
        self.centroids: Optional[np.ndarray] = None  # (nlist, D) float32
        self._assign: list[int] = []
        self._lock = threading.Lock()
        self._cache: Optional[dict] = None

    # ------------------------------------------------------------------ state

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def size(self) -> int:
        return len(self._ids)

    @property
    def doc_ids(self) -> list[str]:
        return list(self._ids)

    @property
    def is_trained(self) -> bool:
        return self.centroids is not None

    @property
    def nlist(self) -> int:
        return 0 if self.centroids is None else len(self.centroids)

    @property
    def assignments(self) -> np.ndarray:
        return np.asarray(self._assign, dtype=np.int64)

    def vector(self, doc_id: str) -> np.ndarray:
        return self._rows[self._pos[doc_id]].copy()

    def inverted_lists(self) -> list[list[str]]:
        lists: list[list[str]] = [[] for _ in range(self.nlist)]
        for doc_id, lst in zip(self._ids, self._assign):
            lists[lst].append(doc_id)
        return lists

    def _state(self) -> dict:
        cache = self._cache
        if cache is not None:
            return cache
        with self._lock:
            if self._cache is None:
                m32 = np.stack(self._rows) if self._rows else np.zeros((0, self.dimension), np.float32)
                id_rank = np.empty(len(self._ids), dtype=np.int64)
                id_rank[np.argsort(np.array(self._ids, dtype=object), kind="stable")] = np.arange(len(self._ids))
                cache = {"m64": m32.astype(np.float64), "id_rank": id_rank}
                if self.centroids is not None:
                    assign = np.asarray(self._assign, dtype=np.int64)
                    cache["c64"] = self.centroids.astype(np.float64)
                    cache["lists"] = [np.flatnonzero(assign == c) for c in range(self.nlist)]
                self._cache = cache
            return self._cache

    def _invalidate(self) -> None:
        with self._lock:
            self._cache = None

    def _as_vector(self, vector) -> np.ndarray:
        v = np.asarray(vector, dtype=np.float32).reshape(-1)
        if v.shape[0] != self.dimension:
            raise DimensionMismatch(f"expected length {self.dimension}, got {v.shape[0]}")
        if not np.all(np.isfinite(v)):
            raise ValueError("vector contains non-finite values")
        return v

    # --------------------------------------------------------------- building

    def add(self, doc_id: str, vector) -> "VectorIndex":
        """Append one entry; after training it joins its nearest cell (L2)."""
        v = self._as_vector(vector)
        if doc_id in self._pos:
            raise DuplicateDocId(doc_id)
        if self.centroids is not None:
            c64 = self.centroids.astype(np.float64)
            self._assign.append(int(_kmeans.assign(v.astype(np.float64)[None, :], c64)[0]))
        self._pos[doc_id] = len(self._ids)
        self._ids.append(doc_id)
        self._rows.append(v.copy())
        self._invalidate()
        return self

    def add_many(self, doc_ids: Sequence[str], vectors: Iterable) -> "VectorIndex":
        for doc_id, vec in zip(doc_ids, vectors):
            self.add(doc_id, vec)
        return self

    def train_ivf(self, nlist: int, seed: int = 0) -> "VectorIndex":
        """Partition current entries into ``nlist`` k-means cells."""
        if nlist < 1 or self.size < nlist:
            raise TooFewVectors(f"need at least nlist={nlist} >= 1 vectors, have {self.size}")
        x = self._state()["m64"]
        centroids, _ = _kmeans.kmeans(x, nlist, seed)
        self.centroids = centroids.astype(np.float32)
        self._assign = [int(a) for a in _kmeans.assign(x, self.centroids.astype(np.float64))]
        self._invalidate()
        return self

    # -------------------------------------------------------------- searching

    def _query(self, query, k: int) -> np.ndarray:
        if self.size == 0:
            raise EmptyIndex("index is empty")
        if k < 1:
            raise BadK(f"k must be >= 1, got {k}")
        return self._as_vector(query).astype(np.float64)

    @staticmethod
    def _scores(m64: np.ndarray, rows: Optional[np.ndarray], q: np.ndarray) -> np.ndarray:
        # Row-wise multiply + reduce so a row's score never depends on which
        # other rows are scored alongside it.
        sub = m64 if rows is None else m64[rows]
        out = np.empty(len(sub), dtype=np.float64)
        for start in range(0, len(sub), _SCORE_BLOCK):
            block = sub[start:start + _SCORE_BLOCK]
            out[start:start + len(block)] = (block * q).sum(axis=1)
        return out

    def _rank(self, rows: np.ndarray, scores: np.ndarray, k: int) -> list[SearchHit]:
        id_rank = self._state()["id_rank"]
        if len(rows) > k:
            kth = np.partition(scores, len(scores) - k)[len(scores) - k]
            keep = scores >= kth
            rows, scores = rows[keep], scores[keep]
        order = np.lexsort((id_rank[rows], -scores))[:k]
        return [
            SearchHit(self._ids[rows[i]], float(scores[i]), r)
            for r, i in enumerate(order, start=1)
        ]

    def search_exact(self, query, k: int = 5) -> list[SearchHit]:
        q = self._query(query, k)
        m64 = self._state()["m64"]
        return self._rank(np.arange(self.size), self._scores(m64, None, q), k)

    def probe_lists(self, query, nprobe: int) -> np.ndarray:
        """Indices of the ``nprobe`` cells with the largest centroid inner product."""
        if self.centroids is None:
            raise NotTrained("index has no IVF partition; call train_ivf first")
        if not 1 <= nprobe <= self.nlist:
            raise BadNprobe(f"nprobe must be in [1, {self.nlist}], got {nprobe}")
        q = self._as_vector(query).astype(np.float64)
        c64 = self._state()["c64"]
        cs = self._scores(c64, None, q)
        return np.lexsort((np.arange(len(cs)), -cs))[:nprobe]

    def search_ivf(self, query, k: int = 5, nprobe: int = 1) -> list[SearchHit]:
        probes = self.probe_lists(query, nprobe)
        q = self._query(query, k)
        state = self._state()
        rows = np.concatenate([state["lists"][p] for p in probes])
        if len(rows) == 0:
            return []
        return self._rank(rows, self._scores(state["m64"], rows, q), k)

    def search(self, query, k: int = 5, nprobe: Optional[int] = None) -> list[SearchHit]:
        """IVF search when ``nprobe`` is given, exact otherwise."""
        if nprobe is None:
            return self.search_exact(query, k)
        return self.search_ivf(query, k, nprobe)

    # ------------------------------------------------------------ persistence

    def to_bytes(self) -> bytes:
        parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, self.dimension, self.size,
                              FLAG_IVF if self.is_trained else 0)]
        for doc_id, row in zip(self._ids, self._rows):
            raw = doc_id.encode("utf-8")
            parts.append(struct.pack("<I", len(raw)))
            parts.append(raw)
            parts.append(row.astype("<f4").tobytes())
        if self.is_trained:
            parts.append(struct.pack("<I", self.nlist))
            parts.append(self.centroids.astype("<f4").tobytes())
            parts.append(np.asarray(self._assign, dtype="<u4").tobytes())
        body = b"".join(parts)
        return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)

    @classmethod
    def from_bytes(cls, data: bytes) -> "VectorIndex":
        if len(data) < _HEADER.size + 4:
            raise CorruptFile("file too short")
        body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
        if zlib.crc32(body) & 0xFFFFFFFF != crc:
            raise CorruptFile("checksum mismatch")
        magic, version, dim, count, flags = _HEADER.unpack_from(body, 0)
        if magic != MAGIC:
            raise CorruptFile(f"bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise CorruptFile(f"unsupported format version {version}")
        if dim < 1:
            raise CorruptFile("dimension must be positive")
        off = _HEADER.size
        vec_bytes = 4 * dim

        def take(n: int) -> bytes:
            nonlocal off
            if off + n > len(body):
                raise CorruptFile("unexpected end of data")
            chunk = body[off:off + n]
            off += n
            return chunk

        idx = cls(dim)
        try:
            for _ in range(count):
                (id_len,) = struct.unpack("<I", take(4))
                doc_id = take(id_len).decode("utf-8")
                vec = np.frombuffer(take(vec_bytes), dtype="<f4").astype(np.float32)
                if doc_id in idx._pos:
                    raise CorruptFile(f"duplicate doc_id {doc_id!r}")
                idx._pos[doc_id] = len(idx._ids)
                idx._ids.append(doc_id)
                idx._rows.append(vec)
            if flags & FLAG_IVF:
                (nlist,) = struct.unpack("<I", take(4))
                if nlist < 1:
                    raise CorruptFile("IVF block with nlist = 0")
                centroids = np.frombuffer(take(nlist * vec_bytes), dtype="<f4")
                assign = np.frombuffer(take(4 * count), dtype="<u4")
                if count and assign.max() >= nlist:
                    raise CorruptFile("list assignment out of range")
                idx.centroids = centroids.reshape(nlist, dim).astype(np.float32)
                idx._assign = [int(a) for a in assign]
        except UnicodeDecodeError as exc:
            raise CorruptFile(f"doc_id is not valid UTF-8: {exc}") from exc
        if off != len(body):
            raise CorruptFile(f"{len(body) - off} trailing bytes")
        return idx

    def save(self, path: str) -> None:
        data = self.to_bytes()
        tmp = f"{path}.tmp"
        try:
            with open(tmp, "wb") as fh:
                fh.write(data)
            os.replace(tmp, path)
        except OSError as exc:
            raise IoFailure(str(exc)) from exc

    @classmethod
    def load(cls, path: str) -> "VectorIndex":
        try:
            with open(path, "rb") as fh:
                data = fh.read()
        except OSError as exc:
            raise IoFailure(str(exc)) from exc
        return cls.from_bytes(data)
