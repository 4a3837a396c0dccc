"""Linear softmax heads and the pair-similarity losses, with gradients.

All losses compute true cosine similarity (normalization included in the
chain rule), so analytic gradients are valid at any input point, not only
on the unit sphere.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


@dataclass
class SoftmaxHead:
    in_dim: int
    classes: int
    weights: np.ndarray  # (classes, in_dim)
    bias: np.ndarray     # (classes,)
    class_labels: list[str]

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(self.classes, self.in_dim)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(self.classes)
        if len(self.class_labels) != self.classes:
            raise ValueError("class_labels length must equal classes")

    @classmethod
    def zeros(cls, in_dim: int, class_labels: Sequence[str]) -> "SoftmaxHead":
        classes = len(class_labels)
        return cls(in_dim, classes, np.zeros((classes, in_dim)), np.zeros(classes), list(class_labels))


@dataclass
class ContrastiveConfig:
    margin: float = 0.5
    online_mining: bool = True

    def __post_init__(self) -> None:
        if not (0.0 < self.margin <= 2.0):
            raise ValueError("margin must lie in (0, 2]")


@dataclass
class MnrConfig:
    scale: float = 20.0

    def __post_init__(self) -> None:
        if not np.isfinite(self.scale) or self.scale <= 0:
            raise ValueError("scale must be a positive finite real")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


def pair_features(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Concatenate (u, v, |u - v|) for the pair classification head."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dim mismatch: {u.shape} vs {v.shape}")
    return np.concatenate([u, v, np.abs(u - v)])


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    exps = np.exp(shifted)
    return exps / np.sum(exps, axis=-1, keepdims=True)


def head_forward(head: SoftmaxHead, x: np.ndarray) -> np.ndarray:
    """softmax(W x + b), max-stabilized."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (head.in_dim,):
        raise ValueError(f"input shape {x.shape} != ({head.in_dim},)")
    return _softmax(head.weights @ x + head.bias)


def _cos_and_grads(u: np.ndarray, v: np.ndarray):
    """cosine(u, v) plus its gradients w.r.t. u and v."""
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine similarity undefined for zero vectors")
    c = float(np.dot(u, v) / (nu * nv))
    dc_du = v / (nu * nv) - c * u / (nu * nu)
    dc_dv = u / (nu * nv) - c * v / (nv * nv)
    return c, dc_du, dc_dv


def contrastive_loss(
    pairs: Sequence[tuple[np.ndarray, np.ndarray, int]],
    config: Optional[ContrastiveConfig] = None,
) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    """Margin contrastive loss on cosine distance D = 1 - cos(u, v).

    Positives contribute D^2, negatives max(0, margin - D)^2. With online
    mining only hard pairs count: positives with D above the smallest
    negative D, negatives with D below the largest positive D; a batch
    with a single class present keeps all its pairs. The loss is the mean
    over contributing pairs (0 if none contribute). Returns per-pair
    gradients aligned with the input order.
    """
    if not pairs:
        raise ValueError("contrastive_loss needs a non-empty batch")
    config = config or ContrastiveConfig()

    cos: list[tuple[float, np.ndarray, np.ndarray]] = []
    arrays = []
    for u, v, label in pairs:
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        arrays.append((u, v, int(label)))
        cos.append(_cos_and_grads(u, v))

    dist = [1.0 - c for c, _, _ in cos]
    pos_idx = [i for i, (_, _, lbl) in enumerate(arrays) if lbl == 1]
    neg_idx = [i for i, (_, _, lbl) in enumerate(arrays) if lbl == 0]

    if config.online_mining and pos_idx and neg_idx:
        min_neg = min(dist[i] for i in neg_idx)
        max_pos = max(dist[i] for i in pos_idx)
        active_pos = [i for i in pos_idx if dist[i] > min_neg]
        active_neg = [i for i in neg_idx if dist[i] < max_pos]
    else:
        active_pos, active_neg = pos_idx, neg_idx

    grads = [(np.zeros_like(u), np.zeros_like(v)) for u, v, _ in arrays]
    total = 0.0
    m = len(active_pos) + len(active_neg)
    if m == 0:
        return 0.0, grads

    for i in active_pos:
        d = dist[i]
        total += d * d
        _, dc_du, dc_dv = cos[i]
        # dL/dc = -2D, scaled by the batch mean
        grads[i] = ((-2.0 * d / m) * dc_du, (-2.0 * d / m) * dc_dv)
    for i in active_neg:
        gap = config.margin - dist[i]
        if gap > 0.0:
            total += gap * gap
            _, dc_du, dc_dv = cos[i]
            grads[i] = ((2.0 * gap / m) * dc_du, (2.0 * gap / m) * dc_dv)
    return total / m, grads


def mnr_loss(
    pairs: Sequence[tuple[np.ndarray, np.ndarray]],
    config: Optional[MnrConfig] = None,
) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    """Multiple-negatives ranking loss over in-batch scaled cosine logits.

    Logit S[i][j] = scale * cos(a_i, b_j); each row's target is its own
    pair, every other b_j acts as a negative. Returns the mean row
    cross-entropy and gradients for every a_i and b_j.
    """
    if not pairs:
        raise ValueError("mnr_loss needs a non-empty batch")
    config = config or MnrConfig()
    b = len(pairs)
    a_vecs = [np.asarray(a, dtype=np.float64) for a, _ in pairs]
    b_vecs = [np.asarray(v, dtype=np.float64) for _, v in pairs]

    s = np.empty((b, b))
    dc_da = [[None] * b for _ in range(b)]
    dc_db = [[None] * b for _ in range(b)]
    for i in range(b):
        for j in range(b):
            c, g_a, g_b = _cos_and_grads(a_vecs[i], b_vecs[j])
            s[i, j] = config.scale * c
            dc_da[i][j] = g_a
            dc_db[i][j] = g_b

    shifted = s - np.max(s, axis=1, keepdims=True)
    log_probs = shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
    loss = float(-np.mean(np.diag(log_probs)))

    probs = np.exp(log_probs)
    ds = (probs - np.eye(b)) / b  # dL/dS
    grads_a = [np.zeros_like(a) for a in a_vecs]
    grads_b = [np.zeros_like(v) for v in b_vecs]
    for i in range(b):
        for j in range(b):
            coeff = ds[i, j] * config.scale
            if coeff != 0.0:
                grads_a[i] = grads_a[i] + coeff * dc_da[i][j]
                grads_b[j] = grads_b[j] + coeff * dc_db[i][j]
    return loss, list(zip(grads_a, grads_b))


def cross_entropy(
    head: SoftmaxHead,
    features: np.ndarray,
    labels: np.ndarray,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy of the head on a batch, with dW and db."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    n = x.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    if y.min() < 0 or y.max() >= head.classes:
        raise ValueError("label out of range")
    logits = x @ head.weights.T + head.bias
    shifted = logits - np.max(logits, axis=1, keepdims=True)
    log_probs = shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
    loss = float(-np.mean(log_probs[np.arange(n), y]))
    probs = np.exp(log_probs)
    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    return loss, dlogits.T @ x, dlogits.sum(axis=0)


def train_head(
    features: np.ndarray,
    labels: Sequence[int],
    config: TrainConfig,
    class_labels: Optional[Sequence[str]] = None,
) -> tuple[SoftmaxHead, list[float]]:
    """Mini-batch SGD on mean cross-entropy from a zero-initialized head.

    Shuffling is seeded, so the loss trace is bit-reproducible for a given
    config. The trace records the per-sample mean loss of each epoch.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("features must be a non-empty (n, d) matrix")
    if x.shape[0] != y.shape[0]:
        raise ValueError("features and labels lengths differ")
    classes = int(y.max()) + 1 if class_labels is None else len(class_labels)
    if y.min() < 0 or y.max() >= classes:
        raise ValueError("label out of range")
    if class_labels is None:
        class_labels = [str(i) for i in range(classes)]

    head = SoftmaxHead.zeros(x.shape[1], class_labels)
    rng = np.random.default_rng(config.seed)
    n = x.shape[0]
    trace: list[float] = []
    for _ in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            loss, dw, db = cross_entropy(head, x[batch], y[batch])
            head.weights -= config.learning_rate * dw
            head.bias -= config.learning_rate * db
            epoch_loss += loss * len(batch)
        trace.append(epoch_loss / n)
        if not (np.all(np.isfinite(head.weights)) and np.all(np.isfinite(head.bias))):
            raise FloatingPointError("head weights diverged to non-finite values")
    return head, trace


def predict_topic(head: SoftmaxHead, embedding: np.ndarray) -> tuple[str, np.ndarray]:
    """Most probable class label plus the full distribution.

    Ties resolve to the lowest class index.
    """
    probs = head_forward(head, embedding)
    return head.class_labels[int(np.argmax(probs))], probs


def save_head(head: SoftmaxHead, path) -> None:
    payload = {
        "in_dim": head.in_dim,
        "classes": head.classes,
        "class_labels": head.class_labels,
        "weights": [[float(w) for w in row] for row in head.weights],
        "bias": [float(b) for b in head.bias],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_head(path) -> SoftmaxHead:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    return SoftmaxHead(
        in_dim=payload["in_dim"],
        classes=payload["classes"],
        weights=np.array(payload["weights"], dtype=np.float64),
        bias=np.array(payload["bias"], dtype=np.float64),
        class_labels=list(payload["class_labels"]),
    )
