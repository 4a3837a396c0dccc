"""Sentence encoders behind the /embed service.

Two backends share one interface: encode(texts) -> (rows, truncated).
Rows are l2-normalized float32; `truncated` flags inputs cut at the token
limit, which the service surfaces per item instead of truncating silently.

`lexical` is a deterministic hashed bag of tokens and character n-grams:
no weights to download, stable across runs and platforms, and it preserves
lexical-overlap orderings, which is what the conformance suite asserts.
The transformer backend wraps any local or cacheable checkpoint with mean
or CLS pooling.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


class EncoderLoadError(RuntimeError):
    """The requested encoder backend could not be constructed."""


@dataclass
class SidecarConfig:
    model: str = "lexical"
    port: int = 8900
    max_batch: int = 256
    pooling: str = "mean"  # "mean" | "cls"
    dim: int = 768         # lexical backend only; transformers dictate their own
    max_tokens: int = 35

    def __post_init__(self) -> None:
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")
        if self.pooling not in ("mean", "cls"):
            raise ValueError(f"unknown pooling {self.pooling!r}")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


_TOKEN_RE = re.compile(r"[\w']+")


def _hash64(feature: str) -> int:
    digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class LexicalEncoder:
    """Hashed token + character n-gram embedding, unit-normalized.

    Each feature lands on a signed coordinate chosen by a 64-bit hash, so
    identical texts map to identical vectors and overlapping texts score
    high cosine. Token features carry more weight than character n-grams.
    """

    name = "lexical"
    pooling = "none"

    def __init__(self, dim: int = 768, max_tokens: int = 35):
        if dim < 8:
            raise EncoderLoadError("lexical encoder needs dim >= 8")
        self.dim = dim
        self.max_tokens = max_tokens

    def _features(self, text: str):
        tokens = _TOKEN_RE.findall(text.casefold())
        truncated = len(tokens) > self.max_tokens
        tokens = tokens[: self.max_tokens]
        feats: list[tuple[str, float]] = [("tok:" + tok, 1.0) for tok in tokens]
        for tok in tokens:
            padded = f"^{tok}$"
            for n in (3, 4):
                for i in range(len(padded) - n + 1):
                    feats.append((f"ng{n}:" + padded[i:i + n], 0.4))
        if not feats:
            feats.append(("<empty>", 1.0))
        return feats, truncated

    def encode(self, texts: Sequence[str]) -> tuple[np.ndarray, list[bool]]:
        rows = np.zeros((len(texts), self.dim), dtype=np.float64)
        truncated = []
        for i, text in enumerate(texts):
            feats, was_cut = self._features(text)
            truncated.append(was_cut)
            for feature, weight in feats:
                h = _hash64(feature)
                idx = h % self.dim
                sign = 1.0 if (h >> 63) & 1 else -1.0
                rows[i, idx] += sign * weight
            norm = np.linalg.norm(rows[i])
            if norm == 0.0:
                rows[i, 0] = 1.0
                norm = 1.0
            rows[i] /= norm
        return rows.astype(np.float32), truncated


class TransformerEncoder:
    """Mean/CLS-pooled transformer embeddings via the transformers library."""

    def __init__(self, model_id: str, pooling: str = "mean", max_tokens: int = 35):
        try:
            import torch  # noqa: F401
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise EncoderLoadError(f"transformer backend unavailable: {exc}") from exc
        try:
            self._tokenizer = AutoTokenizer.from_pretrained(model_id)
            self._model = AutoModel.from_pretrained(model_id)
        except Exception as exc:
            raise EncoderLoadError(f"cannot load model {model_id!r}: {exc}") from exc
        self._model.eval()
        self.name = model_id
        self.pooling = pooling
        self.max_tokens = max_tokens
        self.dim = int(self._model.config.hidden_size)

    def encode(self, texts: Sequence[str]) -> tuple[np.ndarray, list[bool]]:
        import torch

        if not texts:
            return np.empty((0, self.dim), dtype=np.float32), []
        untruncated = self._tokenizer(list(texts), add_special_tokens=True)["input_ids"]
        truncated = [len(ids) > self.max_tokens for ids in untruncated]
        batch = self._tokenizer(
            list(texts),
            padding=True,
            truncation=True,
            max_length=self.max_tokens,
            return_tensors="pt",
        )
        with torch.no_grad():
            output = self._model(**batch).last_hidden_state
        if self.pooling == "cls":
            pooled = output[:, 0, :]
        else:
            mask = batch["attention_mask"].unsqueeze(-1).to(output.dtype)
            pooled = (output * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1.0)
        rows = pooled.cpu().numpy().astype(np.float64)
        norms = np.linalg.norm(rows, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        return (rows / norms).astype(np.float32), truncated


def load_encoder(config: SidecarConfig):
    """Build the backend named by config.model ("lexical" or a model id)."""
    if config.model == "lexical":
        return LexicalEncoder(dim=config.dim, max_tokens=config.max_tokens)
    return TransformerEncoder(config.model, pooling=config.pooling, max_tokens=config.max_tokens)
