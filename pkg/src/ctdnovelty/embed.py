"""Term embeddings from the historical network (first- plus second-order proximity).

Each half of the vector is trained with negative sampling: the first half makes
endpoints of observed edges similar to each other, the second half makes terms
with similar neighbourhoods similar through a separate table of context
vectors. Positive edges are drawn proportional to co-occurrence weight, and
negatives proportional to weighted degree ** 0.75, both with alias tables.
"""

from __future__ import annotations

import logging
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .histnet import HistoricalNetwork

logger = logging.getLogger(__name__)


@dataclass
class EmbeddingConfig:
    dim: int = 200
    # one epoch = as many edge samples as there are distinct edges
    epochs: int = 100
    negatives: int = 5
    learning_rate: float = 0.025
    batch_size: int = 128
    seed: int = 0

    def validate(self) -> None:
        if self.dim <= 0 or self.dim % 2:
            raise ValueError(f"embedding dim must be a positive even number, got {self.dim}")
        if self.epochs < 0 or self.negatives < 0 or self.batch_size < 1:
            raise ValueError("epochs and negatives must be >= 0, batch_size >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass(frozen=True, eq=False)
class EmbeddingTable:
    dim: int
    terms: tuple[str, ...]
    matrix: np.ndarray
    trained_window: tuple[int, int]
    seed: int
    loss_history: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "index", {t: i for i, t in enumerate(self.terms)})

    def vector(self, term: str) -> np.ndarray:
        return self.matrix[self.index[term]]

    def __len__(self) -> int:
        return len(self.terms)

    def equals(self, other: "EmbeddingTable") -> bool:
        return (
            self.dim == other.dim
            and self.terms == other.terms
            and self.trained_window == other.trained_window
            and self.seed == other.seed
            and np.array_equal(self.matrix, other.matrix)
        )


class AliasTable:
    """Walker/Vose alias method for O(1) draws from a discrete distribution."""

    def __init__(self, weights):
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or len(w) == 0 or np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be a non-empty non-negative vector with positive sum")
        n = len(w)
        scaled = w * n / w.sum()
        prob = np.zeros(n)
        alias = np.zeros(n, dtype=np.int64)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        while small and large:
            s, l = small.pop(), large.pop()
            prob[s] = scaled[s]
            alias[s] = l
            scaled[l] = scaled[l] + scaled[s] - 1.0
            (small if scaled[l] < 1.0 else large).append(l)
        for i in large + small:
            prob[i] = 1.0
            alias[i] = i
        self.prob = prob
        self.alias = alias

    def __len__(self) -> int:
        return len(self.prob)

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        col = rng.integers(0, len(self.prob), size=size)
        keep = rng.random(size=size) < self.prob[col]
        return np.where(keep, col, self.alias[col])


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def negative_sampling_terms(src: np.ndarray, tgt: np.ndarray, neg: np.ndarray):
    """Loss and gradients of -log s(src.tgt) - sum_k log s(-src.neg_k).

    Shapes: src, tgt (B, d); neg (B, K, d). Returns per-sample loss (B,) and
    gradients with respect to src, tgt and neg.
    """
    pos = np.einsum("bd,bd->b", src, tgt)
    negd = np.einsum("bd,bkd->bk", src, neg)
    loss = _softplus(-pos) + _softplus(negd).sum(axis=1)
    g_pos = _sigmoid(pos) - 1.0
    g_neg = _sigmoid(negd)
    d_src = g_pos[:, None] * tgt + np.einsum("bk,bkd->bd", g_neg, neg)
    d_tgt = g_pos[:, None] * src
    d_neg = g_neg[:, :, None] * src[:, None, :]
    return loss, d_src, d_tgt, d_neg


def batch_gradients(first, second, context, src, tgt, neg):
    """Per-row gradient contributions of one batch of (src, tgt, negatives).

    Returns (loss_per_sample, updates) where updates is a list of
    (table_name, rows, grads) to be scatter-added into the parameter tables.
    """
    loss1, s1, t1, n1 = negative_sampling_terms(first[src], first[tgt], first[neg])
    loss2, s2, t2, n2 = negative_sampling_terms(second[src], context[tgt], context[neg])
    d = first.shape[1]
    updates = [
        ("first", src, s1),
        ("first", tgt, t1),
        ("first", neg.ravel(), n1.reshape(-1, d)),
        ("second", src, s2),
        ("context", tgt, t2),
        ("context", neg.ravel(), n2.reshape(-1, d)),
    ]
    return loss1 + loss2, updates


def line_objective(params: dict[str, np.ndarray], src, tgt, neg):
    """Total sampled loss and dense gradients for all three tables."""
    loss, updates = batch_gradients(params["first"], params["second"], params["context"], src, tgt, neg)
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    for name, rows, g in updates:
        np.add.at(grads[name], rows, g)
    return float(loss.sum()), grads


def initial_tables(n_terms: int, dim: int, seed: int) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    half = dim // 2
    bound = 0.5 / dim
    return {
        "first": rng.uniform(-bound, bound, size=(n_terms, half)),
        "second": rng.uniform(-bound, bound, size=(n_terms, half)),
        "context": np.zeros((n_terms, half)),
    }


def _edge_arrays(net: HistoricalNetwork):
    upper = sp.triu(net.cooc, k=1).tocoo()
    order = np.lexsort((upper.col, upper.row))
    return upper.row[order].astype(np.int64), upper.col[order].astype(np.int64), upper.data[order].astype(np.float64)


def train_embeddings(net: HistoricalNetwork, config: EmbeddingConfig | None = None) -> EmbeddingTable:
    """Train embeddings for every term of ``net``; deterministic for a fixed seed."""
    config = config or EmbeddingConfig()
    config.validate()
    if net.empty or net.n_terms == 0:
        raise ValueError("cannot train embeddings on an empty network")
    rows, cols, weights = _edge_arrays(net)
    if len(weights) == 0:
        raise ValueError("network has no co-occurrence edges to train on")

    params = initial_tables(net.n_terms, config.dim, config.seed)
    # separate stream from the initialisation so epochs=0 leaves init untouched
    rng = np.random.default_rng([config.seed, 1])
    edge_sampler = AliasTable(weights)
    degree = np.asarray(net.cooc.sum(axis=1)).ravel().astype(np.float64)
    neg_sampler = AliasTable(np.power(degree, 0.75))

    per_epoch = len(weights)
    total = per_epoch * config.epochs
    history = []
    done = 0
    for epoch in range(config.epochs):
        epoch_loss = 0.0
        left = per_epoch
        while left > 0:
            b = min(config.batch_size, left)
            e = edge_sampler.draw(rng, b)
            flip = rng.random(b) < 0.5
            src = np.where(flip, cols[e], rows[e])
            tgt = np.where(flip, rows[e], cols[e])
            neg = neg_sampler.draw(rng, (b, config.negatives))
            lr = config.learning_rate * max(1e-4, 1.0 - done / total)
            loss, updates = batch_gradients(params["first"], params["second"], params["context"], src, tgt, neg)
            for name, idx, g in updates:
                np.subtract.at(params[name], idx, lr * g)
            epoch_loss += float(loss.sum())
            done += b
            left -= b
        history.append(epoch_loss / per_epoch)
        logger.debug("epoch %d loss %.6f", epoch, history[-1])

    matrix = np.hstack([params["first"], params["second"]])
    return EmbeddingTable(config.dim, net.terms, matrix, net.window, config.seed, tuple(history))


# little-endian: magic(8) version(u32) dim(u32) seed(i64) start(i32) end(i32) vocab(u32)
# then (u32 length, utf-8) per term, then f64[vocab * dim]
EMB_MAGIC = b"CTDEMB\x00\x01"
EMB_VERSION = 1
_EMB_HEADER = struct.Struct("<8sIIqiiI")


class EmbeddingFormatError(ValueError):
    pass


class EmbeddingWindowWarning(UserWarning):
    pass


def save_embeddings(table: EmbeddingTable, path: str | Path) -> None:
    chunks = [_EMB_HEADER.pack(EMB_MAGIC, EMB_VERSION, table.dim, table.seed,
                               table.trained_window[0], table.trained_window[1], len(table.terms))]
    for t in table.terms:
        raw = t.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
    chunks.append(np.ascontiguousarray(table.matrix, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_embeddings(path: str | Path, expected_window: tuple[int, int] | None = None) -> EmbeddingTable:
    buf = Path(path).read_bytes()
    if len(buf) < _EMB_HEADER.size:
        raise EmbeddingFormatError(f"{path}: truncated header")
    magic, version, dim, seed, start, end, v = _EMB_HEADER.unpack_from(buf, 0)
    if magic != EMB_MAGIC:
        raise EmbeddingFormatError(f"{path}: bad magic, not an embedding file")
    if version != EMB_VERSION:
        raise EmbeddingFormatError(f"{path}: unsupported format version {version}")
    pos = _EMB_HEADER.size
    terms = []
    try:
        for _ in range(v):
            (n,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            raw = buf[pos:pos + n]
            if len(raw) != n:
                raise struct.error
            terms.append(raw.decode("utf-8"))
            pos += n
    except struct.error:
        raise EmbeddingFormatError(f"{path}: truncated vocabulary") from None
    need = pos + 8 * v * dim
    if len(buf) != need:
        raise EmbeddingFormatError(f"{path}: expected {need} bytes, found {len(buf)}")
    matrix = np.frombuffer(buf, "<f8", v * dim, pos).reshape(v, dim).astype(np.float64)
    table = EmbeddingTable(dim, tuple(terms), matrix, (start, end), seed)
    if expected_window is not None and tuple(expected_window) != table.trained_window:
        warnings.warn(
            f"{path}: embeddings trained on window {table.trained_window}, requested {tuple(expected_window)}",
            EmbeddingWindowWarning,
            stacklevel=2,
        )
    return table


