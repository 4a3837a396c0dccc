"""Exact and approximate cosine top-k search.

brute_force_topk is the oracle; IvfIndex partitions rows into k-means
cells and probes only the nearest nprobe cells at query time, re-scoring
every candidate with the full dot product so returned scores are exact.
Probing all cells is therefore identical to brute force.

Index file layout (little-endian): magic "QIVF", version u16 = 1, dim u32,
ncells u32, count u64, seed u64, then ncells*dim float32 centroids, then
per cell a u64 length followed by that many u64 row references into the
companion QEMB matrix.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .embedding import EmbeddingMatrix
from .errors import DataError, FormatError

_QIVF_MAGIC = b"QIVF"
_QIVF_VERSION = 1

MAX_NCELLS = 65536


@dataclass(frozen=True)
class SearchHit:
    id: str
    score: float


@dataclass
class IvfIndex:
    dim: int
    ncells: int
    centroids: np.ndarray          # (ncells, dim) float32, unit-normalized
    lists: list[np.ndarray]        # per cell, int64 row indices into matrix
    default_nprobe: int
    build_seed: int
    matrix: Optional[EmbeddingMatrix] = None

    @property
    def count(self) -> int:
        return int(sum(len(lst) for lst in self.lists))

    def attach(self, matrix: EmbeddingMatrix) -> "IvfIndex":
        if matrix.dim != self.dim:
            raise ValueError(f"matrix dim {matrix.dim} != index dim {self.dim}")
        if matrix.count != self.count:
            raise ValueError(f"matrix has {matrix.count} rows, index references {self.count}")
        self.matrix = matrix
        return self


def default_ncells(count: int) -> int:
    """sqrt-rule cell count, clamped to [1, MAX_NCELLS] and to the corpus size."""
    return max(1, min(MAX_NCELLS, int(round(count ** 0.5)), count))


def _top_hits(ids: Sequence[str], rows: np.ndarray, scores: np.ndarray, k: int) -> list[SearchHit]:
    """Top-k by score descending, ties by id ascending. Exact under ties:
    argpartition narrows to the boundary-score tier, then a full sort of
    that small tier decides order."""
    n = scores.shape[0]
    if n == 0 or k <= 0:
        return []
    k = min(k, n)
    if n > k:
        part = np.argpartition(scores, n - k)
        kth_score = scores[part[n - k]]
        cand = np.flatnonzero(scores >= kth_score)
    else:
        cand = np.arange(n)
    ranked = sorted(((-float(scores[i]), ids[rows[i]]) for i in cand))[:k]
    return [SearchHit(id=qid, score=-neg) for neg, qid in ranked]


def brute_force_topk(matrix: EmbeddingMatrix, query: np.ndarray, k: int) -> list[SearchHit]:
    """Exact top-k by dot product over all rows."""
    query = np.asarray(query, dtype=np.float32)
    if query.shape != (matrix.dim,):
        raise ValueError(f"query shape {query.shape} != ({matrix.dim},)")
    if k < 1:
        raise ValueError("k must be >= 1")
    scores = matrix.data @ query
    return _top_hits(matrix.ids, np.arange(matrix.count), scores, k)


def _kmeans_pp_seeds(data: np.ndarray, ncells: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding on unit vectors (squared Euclidean = 2 - 2*dot)."""
    n = data.shape[0]
    centroids = np.empty((ncells, data.shape[1]), dtype=np.float32)
    first = int(rng.integers(n))
    centroids[0] = data[first]
    min_d2 = np.maximum(2.0 - 2.0 * (data @ centroids[0]), 0.0)
    chosen = {first}
    for c in range(1, ncells):
        total = float(min_d2.sum())
        if total <= 0.0:
            # all remaining mass at zero distance: take the first unchosen row
            idx = next(i for i in range(n) if i not in chosen)
        else:
            idx = int(rng.choice(n, p=min_d2 / total))
        centroids[c] = data[idx]
        chosen.add(idx)
        d2 = np.maximum(2.0 - 2.0 * (data @ centroids[c]), 0.0)
        np.minimum(min_d2, d2, out=min_d2)
    return centroids


def _normalize_centroids(centroids: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(centroids, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return centroids / norms


def ivf_build(
    matrix: EmbeddingMatrix,
    ncells: Optional[int] = None,
    seed: int = 0,
    max_iters: int = 25,
) -> IvfIndex:
    """Cluster rows with spherical k-means and build the inverted lists.

    Centroids stay unit-normalized, so nearest-by-Euclidean and
    nearest-by-cosine coincide at every step. Lloyd iterations stop when
    the largest centroid movement drops below 1e-6. A cell that empties is
    re-seeded with the row currently farthest from its own centroid.
    Deterministic for a given (matrix, ncells, seed).
    """
    n = matrix.count
    if ncells is None:
        ncells = default_ncells(n)
    if ncells < 1:
        raise ValueError("ncells must be >= 1")
    if ncells > n:
        raise ValueError(f"ncells {ncells} exceeds row count {n}")

    data = matrix.data
    data64 = data.astype(np.float64)
    rng = np.random.default_rng(seed)
    centroids = _normalize_centroids(_kmeans_pp_seeds(data, ncells, rng).astype(np.float64))

    rows = np.arange(n)
    for _ in range(max_iters):
        sims = data @ centroids.astype(np.float32).T
        assign = np.argmax(sims, axis=1)
        own = sims[rows, assign]

        # re-seed empty cells with the globally worst-fitting rows
        counts = np.bincount(assign, minlength=ncells)
        for cell in np.flatnonzero(counts == 0):
            worst = int(np.argmin(own))
            counts[assign[worst]] -= 1
            assign[worst] = cell
            counts[cell] = 1
            own[worst] = np.inf

        # segment means via stable sort + reduceat; every cell is non-empty here
        order = np.argsort(assign, kind="stable")
        starts = np.searchsorted(assign[order], np.arange(ncells), side="left")
        new_centroids = np.add.reduceat(data64[order], starts, axis=0)
        new_centroids /= counts[:, None]
        new_centroids = _normalize_centroids(new_centroids)

        movement = float(np.max(np.linalg.norm(new_centroids - centroids, axis=1)))
        centroids = new_centroids
        if movement < 1e-6:
            break

    centroids32 = centroids.astype(np.float32)
    sims = data @ centroids32.T
    assign = np.argmax(sims, axis=1)
    counts = np.bincount(assign, minlength=ncells)
    own = sims[np.arange(n), assign]
    for cell in np.flatnonzero(counts == 0):
        worst = int(np.argmin(own))
        counts[assign[worst]] -= 1
        assign[worst] = cell
        counts[cell] = 1
        own[worst] = np.inf

    lists = [np.flatnonzero(assign == c).astype(np.int64) for c in range(ncells)]
    nprobe = max(1, min(ncells, int(round(ncells ** 0.5))))
    return IvfIndex(
        dim=matrix.dim,
        ncells=ncells,
        centroids=centroids32,
        lists=lists,
        default_nprobe=nprobe,
        build_seed=seed,
        matrix=matrix,
    )


def ivf_search(
    index: IvfIndex,
    query: np.ndarray,
    k: int,
    nprobe: Optional[int] = None,
) -> list[SearchHit]:
    """Probe the nprobe nearest cells and exactly re-score their rows."""
    if index.matrix is None:
        raise ValueError("index has no attached embedding matrix")
    if nprobe is None:
        nprobe = index.default_nprobe
    if not (1 <= nprobe <= index.ncells):
        raise ValueError(f"nprobe {nprobe} outside [1, {index.ncells}]")
    query = np.asarray(query, dtype=np.float32)
    if query.shape != (index.dim,):
        raise ValueError(f"query shape {query.shape} != ({index.dim},)")

    cell_scores = index.centroids @ query
    ncells = index.ncells
    if nprobe < ncells:
        part = np.argpartition(cell_scores, ncells - nprobe)
        kth = cell_scores[part[ncells - nprobe]]
        tier = np.flatnonzero(cell_scores >= kth)
        probed = sorted(tier, key=lambda c: (-cell_scores[c], c))[:nprobe]
    else:
        probed = range(ncells)

    cand_lists = [index.lists[c] for c in probed if len(index.lists[c])]
    if not cand_lists:
        return []
    cand = np.concatenate(cand_lists)
    scores = index.matrix.data[cand] @ query
    return _top_hits(index.matrix.ids, cand, scores, k)


def save_index(index: IvfIndex, path) -> None:
    with open(str(path), "wb") as fh:
        fh.write(_QIVF_MAGIC)
        fh.write(struct.pack(
            "<HIIQQ", _QIVF_VERSION, index.dim, index.ncells,
            index.count, index.build_seed & 0xFFFFFFFFFFFFFFFF,
        ))
        fh.write(struct.pack("<I", index.default_nprobe))
        fh.write(np.ascontiguousarray(index.centroids, dtype="<f4").tobytes())
        for lst in index.lists:
            fh.write(struct.pack("<Q", len(lst)))
            fh.write(np.ascontiguousarray(lst, dtype="<u8").tobytes())


def load_index(path, matrix: Optional[EmbeddingMatrix] = None) -> IvfIndex:
    """Read a QIVF file; attach `matrix` to make the index searchable."""
    with open(str(path), "rb") as fh:
        blob = fh.read()
    if blob[:4] != _QIVF_MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}, expected {_QIVF_MAGIC!r}")
    header_fmt = "<HIIQQ"
    header_size = struct.calcsize(header_fmt)
    if len(blob) < 4 + header_size + 4:
        raise FormatError("truncated header")
    version, dim, ncells, count, seed = struct.unpack_from(header_fmt, blob, 4)
    if version != _QIVF_VERSION:
        raise FormatError(f"unsupported version {version}")
    offset = 4 + header_size
    (default_nprobe,) = struct.unpack_from("<I", blob, offset)
    offset += 4

    cent_bytes = ncells * dim * 4
    if len(blob) < offset + cent_bytes:
        raise DataError("truncated centroid block")
    centroids = np.frombuffer(blob, dtype="<f4", count=ncells * dim, offset=offset) \
        .reshape(ncells, dim).copy()
    offset += cent_bytes

    lists: list[np.ndarray] = []
    total = 0
    for _ in range(ncells):
        if len(blob) < offset + 8:
            raise DataError("truncated list header")
        (length,) = struct.unpack_from("<Q", blob, offset)
        offset += 8
        if len(blob) < offset + 8 * length:
            raise DataError("truncated list payload")
        refs = np.frombuffer(blob, dtype="<u8", count=length, offset=offset).astype(np.int64)
        offset += 8 * length
        lists.append(refs)
        total += length
    if total != count:
        raise DataError(f"lists reference {total} rows, header claims {count}")

    index = IvfIndex(
        dim=dim,
        ncells=ncells,
        centroids=centroids,
        lists=lists,
        default_nprobe=default_nprobe,
        build_seed=seed,
        matrix=None,
    )
    if matrix is not None:
        index.attach(matrix)
    return index
