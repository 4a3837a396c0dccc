"""Embedding providers and vector utilities.

Three interchangeable providers produce an EmbeddingMatrix: QEMB file
ingest, an HTTP sidecar client, and a deterministic mock. All similarity
math downstream assumes rows have been l2-normalized so cosine reduces to
a plain dot product.

QEMB file layout (little-endian): magic "QEMB", version u16 = 1, dim u32,
count u64, then count*dim float32. A companion ids file at `<path>.ids`
holds one JSON object {"row": n, "id": s} per line.
"""

from __future__ import annotations

import json
import struct
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError, DataError, FormatError, RetryableError, TransportError
from .hashing import fnv1a64, splitmix64, uniform01

_QEMB_MAGIC = b"QEMB"
_QEMB_VERSION = 1
DEFAULT_DIM = 768


@dataclass
class EmbeddingMatrix:
    """Row-major float32 vectors keyed by unique string ids."""

    dim: int
    ids: list[str]
    data: np.ndarray  # (count, dim) float32

    def __post_init__(self) -> None:
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 2 or self.data.shape[1] != self.dim:
            raise ValueError(f"data shape {self.data.shape} does not match dim {self.dim}")
        if len(self.ids) != self.data.shape[0]:
            raise ValueError("ids length does not match row count")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("ids must be distinct")
        self._row_of: Optional[dict[str, int]] = None

    @property
    def count(self) -> int:
        return self.data.shape[0]

    def row_of(self, qid: str) -> int:
        if self._row_of is None:
            self._row_of = {qid: i for i, qid in enumerate(self.ids)}
        return self._row_of[qid]

    def vector(self, qid: str) -> np.ndarray:
        return self.data[self.row_of(qid)]


def l2_normalize(matrix: EmbeddingMatrix) -> EmbeddingMatrix:
    """Unit-normalize every row; zero rows are rejected."""
    norms = np.linalg.norm(matrix.data.astype(np.float64), axis=1)
    if matrix.count and not np.all(norms > 0):
        bad = [matrix.ids[i] for i in np.flatnonzero(norms == 0)[:5]]
        raise DataError(f"cannot normalize zero vectors (ids {bad})")
    data = (matrix.data.astype(np.float64) / norms[:, None]).astype(np.float32) \
        if matrix.count else matrix.data
    return EmbeddingMatrix(dim=matrix.dim, ids=list(matrix.ids), data=data)


def normalize_rows(data: np.ndarray) -> np.ndarray:
    """l2-normalize a raw (n, d) array; zero rows rejected."""
    data = np.asarray(data, dtype=np.float64)
    norms = np.linalg.norm(data, axis=1)
    if data.shape[0] and not np.all(norms > 0):
        raise DataError("cannot normalize zero vectors")
    return (data / norms[:, None]).astype(np.float32) if data.shape[0] else data.astype(np.float32)


def cosine_sim(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity of two vectors; rejects zero vectors."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dim mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine similarity undefined for zero vectors")
    return float(np.dot(u, v) / (nu * nv))


def save_embeddings(matrix: EmbeddingMatrix, path) -> None:
    """Write QEMB binary plus the `<path>.ids` companion."""
    path = str(path)
    with open(path, "wb") as fh:
        fh.write(_QEMB_MAGIC)
        fh.write(struct.pack("<HIQ", _QEMB_VERSION, matrix.dim, matrix.count))
        fh.write(np.ascontiguousarray(matrix.data, dtype="<f4").tobytes())
    with open(path + ".ids", "w", encoding="utf-8", newline="\n") as fh:
        for row, qid in enumerate(matrix.ids):
            fh.write(json.dumps({"row": row, "id": qid}, ensure_ascii=False))
            fh.write("\n")


def load_embeddings(path) -> EmbeddingMatrix:
    """Load a QEMB file and its ids companion; bit-exact with save."""
    path = str(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _QEMB_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {_QEMB_MAGIC!r}")
        header = fh.read(14)
        if len(header) != 14:
            raise FormatError("truncated header")
        version, dim, count = struct.unpack("<HIQ", header)
        if version != _QEMB_VERSION:
            raise FormatError(f"unsupported version {version}")
        payload = fh.read()
    expected = count * dim * 4
    if len(payload) != expected:
        raise DataError(f"payload length {len(payload)}, expected {expected} bytes")
    data = np.frombuffer(payload, dtype="<f4").reshape(count, dim).copy()
    if count and not np.all(np.isfinite(data)):
        raise DataError("matrix contains NaN or Inf values")

    ids: list[str] = [""] * count
    seen_rows = 0
    with open(path + ".ids", "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            row = record["row"]
            if not (0 <= row < count):
                raise FormatError(f"ids file references row {row} outside 0..{count - 1}")
            ids[row] = str(record["id"])
            seen_rows += 1
    if seen_rows != count:
        raise FormatError(f"ids file has {seen_rows} rows, matrix has {count}")
    return EmbeddingMatrix(dim=dim, ids=ids, data=data)


def mock_embed(texts: Sequence[str], dim: int = DEFAULT_DIM, seed: int = 0) -> EmbeddingMatrix:
    """Deterministic pseudo-random unit embeddings.

    Each text keys a splitmix64 stream with seed XOR fnv1a64(casefolded
    text); the stream drives Box-Muller Gaussian draws that are then unit
    normalized. Identical case-folded texts map to identical rows, and
    results do not depend on list order or platform.
    """
    if dim < 2:
        raise ValueError("mock embeddings need dim >= 2")
    ids = [f"q{i:04d}" for i in range(1, len(texts) + 1)]
    data = np.empty((len(texts), dim), dtype=np.float32)
    npairs = (dim + 1) // 2
    for i, text in enumerate(texts):
        key = (seed ^ fnv1a64(text.casefold().encode("utf-8"))) & 0xFFFFFFFFFFFFFFFF
        words = splitmix64(key, 2 * npairs)
        u1 = uniform01(words[0::2])
        u2 = uniform01(words[1::2])
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        gauss = np.empty(2 * npairs, dtype=np.float64)
        gauss[0::2] = r * np.cos(theta)
        gauss[1::2] = r * np.sin(theta)
        vec = gauss[:dim]
        data[i] = (vec / np.linalg.norm(vec)).astype(np.float32)
    return EmbeddingMatrix(dim=dim, ids=ids, data=data)


@dataclass
class EmbedderConfig:
    provider: str  # "file" | "http" | "mock"
    endpoint: Optional[str] = None
    dim: int = DEFAULT_DIM
    seed: int = 0
    batch_size: int = 32

    def __post_init__(self) -> None:
        if self.provider not in ("file", "http", "mock"):
            raise ValueError(f"unknown provider {self.provider!r}")
        if (self.provider == "http") != (self.endpoint is not None):
            raise ValueError("endpoint is required iff provider is http")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")


class MockEmbedder:
    def __init__(self, dim: int = DEFAULT_DIM, seed: int = 0):
        self.dim = dim
        self.seed = seed

    def embed(self, ids: Sequence[str], texts: Sequence[str]) -> EmbeddingMatrix:
        matrix = mock_embed(texts, dim=self.dim, seed=self.seed)
        return EmbeddingMatrix(dim=self.dim, ids=list(ids), data=matrix.data)


class FileEmbedder:
    """Serves precomputed vectors from a QEMB file, keyed by record id."""

    def __init__(self, matrix: EmbeddingMatrix):
        self.matrix = matrix
        self.dim = matrix.dim

    def embed(self, ids: Sequence[str], texts: Sequence[str]) -> EmbeddingMatrix:
        known = set(self.matrix.ids)
        missing = [qid for qid in ids if qid not in known]
        if missing:
            raise KeyError(f"embeddings missing for ids {missing[:5]}")
        rows = np.stack([self.matrix.vector(qid) for qid in ids]) if ids else \
            np.empty((0, self.dim), dtype=np.float32)
        return EmbeddingMatrix(dim=self.dim, ids=list(ids), data=rows)


class HttpEmbedder:
    """Client for the sidecar /embed protocol.

    Sends texts in batches of config.batch_size, preserves input order,
    l2-normalizes rows on receipt. Timeouts and connection failures retry
    with exponential backoff up to `max_attempts`; anything else fails
    immediately.
    """

    def __init__(
        self,
        config: EmbedderConfig,
        timeout: float = 30.0,
        max_attempts: int = 3,
        backoff: float = 0.5,
    ):
        if config.provider != "http":
            raise ValueError("HttpEmbedder requires an http provider config")
        self.config = config
        self.dim = config.dim
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff = backoff

    def _post_batch(self, texts: list[str]) -> np.ndarray:
        import requests

        url = self.config.endpoint.rstrip("/") + "/embed"
        last_exc: Optional[Exception] = None
        for attempt in range(self.max_attempts):
            try:
                resp = requests.post(url, json={"texts": texts}, timeout=self.timeout)
            except (requests.Timeout, requests.ConnectionError) as exc:
                last_exc = exc
                if attempt + 1 < self.max_attempts:
                    time.sleep(self.backoff * (2 ** attempt))
                continue
            if resp.status_code != 200:
                raise TransportError(f"embed endpoint returned {resp.status_code}: {resp.text[:500]}")
            body = resp.json()
            if body.get("dim") != self.config.dim:
                raise ContractError(f"service dim {body.get('dim')} != configured {self.config.dim}")
            rows = np.asarray(body["embeddings"], dtype=np.float32)
            if rows.size == 0:
                rows = rows.reshape(0, self.config.dim)
            if rows.shape != (len(texts), self.config.dim):
                raise ContractError(f"service returned shape {rows.shape}, expected {(len(texts), self.config.dim)}")
            return rows
        raise RetryableError(f"embed request failed after {self.max_attempts} attempts: {last_exc}")

    def embed(self, ids: Sequence[str], texts: Sequence[str]) -> EmbeddingMatrix:
        chunks = []
        texts = list(texts)
        for start in range(0, len(texts), self.config.batch_size):
            chunks.append(self._post_batch(texts[start:start + self.config.batch_size]))
        data = np.concatenate(chunks, axis=0) if chunks else np.empty((0, self.dim), dtype=np.float32)
        if data.shape[0]:
            data = normalize_rows(data)
        return EmbeddingMatrix(dim=self.dim, ids=list(ids), data=data)


def remote_embed(config: EmbedderConfig, texts: Sequence[str], **kwargs) -> EmbeddingMatrix:
    """One-shot HTTP embedding of `texts` with auto row ids."""
    ids = [f"q{i:04d}" for i in range(1, len(texts) + 1)]
    return HttpEmbedder(config, **kwargs).embed(ids, texts)


def make_embedder(config: EmbedderConfig, embeddings_path=None):
    """Instantiate the provider named by `config`."""
    if config.provider == "mock":
        return MockEmbedder(dim=config.dim, seed=config.seed)
    if config.provider == "http":
        return HttpEmbedder(config)
    if embeddings_path is None:
        raise ValueError("file provider needs an embeddings path")
    return FileEmbedder(load_embeddings(embeddings_path))
