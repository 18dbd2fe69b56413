"""Exact and inverted-list cosine search over unit-norm embedding matrices.

Scores are raw dot products, which equal cosine similarity on unit vectors.
Results are ordered by descending score with ties broken by ascending row
index, so identical inputs always produce identical rankings.

The IVF variant partitions rows with a fixed-iteration Lloyd's k-means over
seeded random-row initial centroids. It trades exactness for probe count:
searching ``probes`` lists returns the true top-n *within those lists*, and
probing every list recovers the exact result. Centroids and list assignments
persist in an XMIV sidecar:

  magic "XMIV" | version u32 = 1 | num_lists u32 | dim u32
  | num_lists x dim float32 centroids
  | per list: u64 length, then that many u64 row indices
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    CorruptIndexError,
    DimMismatchError,
    EmptyMatrixError,
    IoFailureError,
    TruncatedFileError,
    UnnormalizedQueryError,
    UnnormalizedSpaceError,
)
from .store import EmbeddingMatrix

XMIV_MAGIC = b"XMIV"
XMIV_VERSION = 1
_IVF_HEADER = struct.Struct("<4sIII")
_LIST_LEN = struct.Struct("<Q")

QUERY_NORM_TOL = 1e-3
KMEANS_ITERS = 25


@dataclass
class SearchResult:
    """Ranked (row_index, score) pairs, best first."""

    entries: list[tuple[int, float]]

    def __len__(self) -> int:
        return len(self.entries)

    def row_indices(self) -> list[int]:
        return [row for row, _ in self.entries]

    def scores(self) -> list[float]:
        return [score for _, score in self.entries]


def top_n_by_score(scores: np.ndarray, n: int) -> np.ndarray:
    """Indices of the ``n`` largest scores; ties resolve to the lowest index.

    Exact with respect to ties: when several rows share the cutoff score,
    the lowest row indices win, matching a full (-score, index) sort.
    """
    count = int(scores.shape[0])
    n = min(int(n), count)
    if n <= 0:
        return np.empty(0, dtype=np.int64)
    if n < count:
        part = np.argpartition(scores, count - n)[count - n :]
        cutoff = scores[part].min()
        above = np.flatnonzero(scores > cutoff)
        tied = np.flatnonzero(scores == cutoff)
        keep = np.concatenate([above, tied[: n - above.size]])
    else:
        keep = np.arange(count)
    order = np.lexsort((keep, -scores[keep]))
    return keep[order].astype(np.int64)


def _check_query(query, dim: int) -> np.ndarray:
    q = np.asarray(query, dtype=np.float32).reshape(-1)
    if q.shape[0] != dim:
        raise DimMismatchError(f"query has dim {q.shape[0]}, index expects {dim}")
    norm = float(np.linalg.norm(q.astype(np.float64)))
    if abs(norm - 1.0) > QUERY_NORM_TOL:
        raise UnnormalizedQueryError(f"query norm {norm:.6f} is not within 1e-3 of 1")
    return q


class ExactIndex:
    """Full-scan top-n search; the reference semantics for every other mode."""

    mode = "exact"

    def __init__(self, matrix: EmbeddingMatrix):
        self.matrix = matrix

    @property
    def dim(self) -> int:
        return self.matrix.space.dim

    def search(self, query, n: int, probes: int | None = None) -> SearchResult:
        q = _check_query(query, self.dim)
        scores = self.matrix.data @ q
        rows = top_n_by_score(scores, n)
        return SearchResult([(int(r), float(scores[r])) for r in rows])


def _assign_lists(x64: np.ndarray, centroids64: np.ndarray) -> np.ndarray:
    # argmin ||x - c||^2 = argmin ||c||^2 - 2 x.c; ties fall to the lowest list id
    cost = (centroids64**2).sum(axis=1)[None, :] - 2.0 * (x64 @ centroids64.T)
    return np.argmin(cost, axis=1)


def train_centroids(
    data: np.ndarray, num_lists: int, seed: int, iters: int = KMEANS_ITERS
) -> np.ndarray:
    """Lloyd's k-means with seeded random-row init; returns float32 centroids."""
    rng = np.random.default_rng(seed)
    x64 = data.astype(np.float64)
    picks = rng.choice(data.shape[0], size=num_lists, replace=False)
    centroids = x64[picks].copy()
    for _ in range(iters):
        assign = _assign_lists(x64, centroids)
        for j in range(num_lists):
            members = assign == j
            if members.any():
                centroids[j] = x64[members].mean(axis=0)
            # an emptied list keeps its previous centroid
    return centroids.astype(np.float32)


class IvfIndex:
    """Inverted-list search: probe the nearest centroid lists, scan only those rows."""

    mode = "ivf"

    def __init__(self, matrix: EmbeddingMatrix, centroids: np.ndarray, lists: list[np.ndarray]):
        if centroids.shape[1] != matrix.space.dim:
            raise DimMismatchError(
                f"centroid dim {centroids.shape[1]} != matrix dim {matrix.space.dim}"
            )
        self.matrix = matrix
        self.centroids = np.ascontiguousarray(centroids, dtype=np.float32)
        self.centroids.setflags(write=False)
        self.lists = [np.ascontiguousarray(lst, dtype=np.uint64) for lst in lists]

    @property
    def dim(self) -> int:
        return self.matrix.space.dim

    @property
    def num_lists(self) -> int:
        return int(self.centroids.shape[0])

    def _ranked_lists(self, q: np.ndarray) -> np.ndarray:
        c64 = self.centroids.astype(np.float64)
        d2 = ((c64 - q.astype(np.float64)) ** 2).sum(axis=1)
        return np.lexsort((np.arange(self.num_lists), d2))

    def search(self, query, n: int, probes: int | None = None) -> SearchResult:
        q = _check_query(query, self.dim)
        if probes is None:
            probes = self.num_lists
        probes = max(1, min(int(probes), self.num_lists))
        ranked = self._ranked_lists(q)
        picked = [self.lists[j] for j in ranked[:probes] if self.lists[j].size]
        if not picked:
            return SearchResult([])
        cand = np.sort(np.concatenate(picked)).astype(np.int64)
        scores = self.matrix.data[cand] @ q
        local = top_n_by_score(scores, n)
        return SearchResult([(int(cand[i]), float(scores[i])) for i in local])


Index = ExactIndex | IvfIndex


def build_index(
    matrix: EmbeddingMatrix,
    mode: str = "exact",
    *,
    num_lists: int | None = None,
    seed: int = 0,
) -> Index:
    """Build an immutable search index over ``matrix``.

    ``num_lists`` is clamped to the row count; the k-means build is fully
    determined by ``seed``.
    """
    if matrix.count == 0:
        raise EmptyMatrixError("cannot index an empty matrix")
    if not matrix.space.normalized:
        raise UnnormalizedSpaceError(
            f"space '{matrix.space.name}' is not normalized; cosine search needs unit rows"
        )
    if mode == "exact":
        return ExactIndex(matrix)
    if mode == "ivf":
        if num_lists is None or num_lists < 1:
            raise ValueError(f"ivf mode needs a positive num_lists, got {num_lists}")
        num_lists = min(int(num_lists), matrix.count)
        centroids = train_centroids(matrix.data, num_lists, seed)
        assign = _assign_lists(matrix.data.astype(np.float64), centroids.astype(np.float64))
        lists = [np.flatnonzero(assign == j).astype(np.uint64) for j in range(num_lists)]
        return IvfIndex(matrix, centroids, lists)
    raise ValueError(f"unknown index mode {mode!r}")


def save_ivf(index: IvfIndex, path) -> None:
    """Persist centroids and list assignments to an XMIV sidecar."""
    path = Path(path)
    parts = [
        _IVF_HEADER.pack(XMIV_MAGIC, XMIV_VERSION, index.num_lists, index.dim),
        np.ascontiguousarray(index.centroids, dtype="<f4").tobytes(),
    ]
    for lst in index.lists:
        parts.append(_LIST_LEN.pack(lst.size))
        parts.append(np.ascontiguousarray(lst, dtype="<u8").tobytes())
    try:
        Path(path).write_bytes(b"".join(parts))
    except OSError as exc:
        raise IoFailureError(f"cannot write index sidecar {path}: {exc}") from exc


def load_ivf(path, matrix: EmbeddingMatrix) -> IvfIndex:
    """Load an XMIV sidecar and re-attach it to its embedding matrix."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoFailureError(f"cannot read index sidecar {path}: {exc}") from exc
    if len(raw) < 4 or raw[:4] != XMIV_MAGIC:
        raise BadMagicError(f"{path}: not an XMIV index file")
    if len(raw) < _IVF_HEADER.size:
        raise TruncatedFileError(f"{path}: header truncated at {len(raw)} bytes")
    _, version, num_lists, dim = _IVF_HEADER.unpack_from(raw)
    if version != XMIV_VERSION:
        raise BadMagicError(f"{path}: unsupported XMIV version {version}")
    if dim != matrix.space.dim:
        raise DimMismatchError(f"{path}: index dim {dim} != matrix dim {matrix.space.dim}")
    if num_lists < 1:
        raise CorruptIndexError(f"{path}: num_lists must be >= 1")
    offset = _IVF_HEADER.size
    cent_bytes = num_lists * dim * 4
    if len(raw) < offset + cent_bytes:
        raise TruncatedFileError(f"{path}: centroid block truncated")
    centroids = np.frombuffer(raw, dtype="<f4", count=num_lists * dim, offset=offset)
    centroids = centroids.reshape(num_lists, dim)
    offset += cent_bytes
    lists: list[np.ndarray] = []
    total = 0
    for _ in range(num_lists):
        if len(raw) < offset + _LIST_LEN.size:
            raise TruncatedFileError(f"{path}: list length prefix truncated")
        (length,) = _LIST_LEN.unpack_from(raw, offset)
        offset += _LIST_LEN.size
        if len(raw) < offset + length * 8:
            raise TruncatedFileError(f"{path}: list payload truncated")
        rows = np.frombuffer(raw, dtype="<u8", count=length, offset=offset)
        offset += length * 8
        if length and int(rows.max()) >= matrix.count:
            raise CorruptIndexError(
                f"{path}: row index {int(rows.max())} out of range for {matrix.count} rows"
            )
        lists.append(rows)
        total += length
    if offset != len(raw):
        raise TruncatedFileError(f"{path}: {len(raw) - offset} trailing bytes")
    if total != matrix.count:
        raise CorruptIndexError(
            f"{path}: lists cover {total} rows, matrix has {matrix.count}"
        )
    return IvfIndex(matrix, centroids, lists)
