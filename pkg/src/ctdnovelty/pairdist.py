"""Pairwise distances between knowledge units and the focal-paper distance matrix.

Five measures are provided, all taking values in [0, 1] (geodesic ones in
(0, 1]). Any pair involving a term unseen in the historical network gets the
ceiling value 1 regardless of measure.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np
from scipy.sparse.csgraph import shortest_path

from .corpus import PaperRecord
from .histnet import EdgeClass, HistoricalNetwork

if TYPE_CHECKING:
    from .embed import EmbeddingTable

# floor for the weighted geodesic, keeps every off-diagonal entry strictly positive
GEO_EPS = 1e-9
NEW_PAIR_DISTANCE = 1.0


class Method(str, enum.Enum):
    TERM_PAPER = "term_paper"
    TERM_TERM = "term_term"
    EMBED = "embed"
    GEO_DISTANCE = "geo_distance"
    GEO_DISTANCE_WEIGHT = "geo_distance_weight"
    # explicit matrices supplied by the caller (testing / worked examples)
    OVERRIDE = "override"

    def __str__(self) -> str:
        return self.value


SCORING_METHODS = tuple(m for m in Method if m is not Method.OVERRIDE)


class UnknownTermError(KeyError):
    """A distance was requested for a term outside the historical vocabulary."""


class ConfigurationError(ValueError):
    pass


def _indices(net: HistoricalNetwork, t_i: str, t_j: str) -> tuple[int, int]:
    for t in (t_i, t_j):
        if t not in net.vocab:
            raise UnknownTermError(f"{t!r} is new relative to window {net.window}; apply the new-node rule")
    return net.vocab[t_i], net.vocab[t_j]


def dist_term_paper(net: HistoricalNetwork, t_i: str, t_j: str) -> float:
    """Cosine distance between binary term-paper incidence vectors.

    Computed from counts: 1 - cooc / sqrt(docs_i * docs_j).
    """
    i, j = _indices(net, t_i, t_j)
    if i == j:
        return 0.0
    denom = math.sqrt(float(net.term_doc_count[i]) * float(net.term_doc_count[j]))
    return min(1.0, max(0.0, 1.0 - net.cooc_count(t_i, t_j) / denom))


def _cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 1.0
    return min(1.0, max(0.0, 1.0 - float(a @ b) / (na * nb)))


def cooc_row(net: HistoricalNetwork, term: str) -> np.ndarray:
    """Dense co-occurrence row of a term (zero at its own position)."""
    return net.cooc.getrow(net.index_of(term)).toarray().ravel().astype(np.float64)


def dist_term_term(net: HistoricalNetwork, t_i: str, t_j: str) -> float:
    i, j = _indices(net, t_i, t_j)
    if i == j:
        return 0.0
    return _cosine_distance(cooc_row(net, t_i), cooc_row(net, t_j))


def dist_embedding(table: "EmbeddingTable", t_i: str, t_j: str) -> float:
    """Cosine distance between embeddings, clamped into [0, 1]."""
    for t in (t_i, t_j):
        if t not in table.index:
            raise UnknownTermError(f"no embedding for {t!r}; apply the new-node rule")
    if t_i == t_j:
        return 0.0
    return _cosine_distance(table.vector(t_i), table.vector(t_j))


def geodesic_from_hops(hops: float) -> float:
    """1 - 1/(hops + 1); unreachable (inf) maps to 1."""
    if math.isinf(hops):
        return 1.0
    return 1.0 - 1.0 / (hops + 1.0)


def hop_count(net: HistoricalNetwork, t_i: str, t_j: str) -> float:
    """Unweighted shortest-path length by breadth-first search; inf if unreachable."""
    src, dst = _indices(net, t_i, t_j)
    if src == dst:
        return 0.0
    indptr, indices = net.cooc.indptr, net.cooc.indices
    depth = {src: 0}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for v in indices[indptr[u]:indptr[u + 1]]:
            v = int(v)
            if v not in depth:
                if v == dst:
                    return float(depth[u] + 1)
                depth[v] = depth[u] + 1
                queue.append(v)
    return math.inf


def dist_geodesic(net: HistoricalNetwork, t_i: str, t_j: str) -> float:
    return geodesic_from_hops(hop_count(net, t_i, t_j))


def dist_geodesic_weighted(net: HistoricalNetwork, t_i: str, t_j: str) -> float:
    """Geodesic distance, with term-term distance standing in for the hop count of direct edges."""
    _indices(net, t_i, t_j)
    if t_i != t_j and net.cooc_count(t_i, t_j) > 0:
        return max(GEO_EPS, geodesic_from_hops(dist_term_term(net, t_i, t_j)))
    return dist_geodesic(net, t_i, t_j)


PAIR_DISTANCES = {
    Method.TERM_PAPER: dist_term_paper,
    Method.TERM_TERM: dist_term_term,
    Method.GEO_DISTANCE: dist_geodesic,
    Method.GEO_DISTANCE_WEIGHT: dist_geodesic_weighted,
}


@dataclass(frozen=True, eq=False)
class FocalDistanceMatrix:
    terms: tuple[str, ...]
    dist: np.ndarray
    edge_class: np.ndarray | None
    method: Method

    @property
    def n(self) -> int:
        return len(self.terms)

    def pair_values(self) -> np.ndarray:
        """Upper-triangle distances, row-major."""
        iu = np.triu_indices(self.n, k=1)
        return self.dist[iu]

    def edge_counts(self) -> dict[EdgeClass, int]:
        counts = {c: 0 for c in EdgeClass}
        if self.edge_class is None:
            return counts
        iu = np.triu_indices(self.n, k=1)
        values, freq = np.unique(self.edge_class[iu], return_counts=True)
        for v, f in zip(values, freq):
            counts[EdgeClass(int(v))] = int(f)
        return counts

    @classmethod
    def from_matrix(cls, terms: Sequence[str], dist, method: Method = Method.OVERRIDE) -> "FocalDistanceMatrix":
        """Wrap an explicit symmetric distance matrix (no edge classes)."""
        d = np.array(dist, dtype=np.float64)
        n = len(terms)
        if d.shape != (n, n):
            raise ValueError(f"matrix shape {d.shape} does not match {n} terms")
        if len(set(terms)) != n:
            raise ValueError("terms must be distinct")
        if not np.all(np.isfinite(d)):
            raise ValueError("matrix has non-finite entries")
        if not np.array_equal(d, d.T):
            raise ValueError("matrix is not symmetric")
        if np.any(np.diag(d) != 0):
            raise ValueError("matrix diagonal must be zero")
        if n > 1 and np.any(d[~np.eye(n, dtype=bool)] < 0):
            raise ValueError("distances must be non-negative")
        return cls(tuple(terms), d, None, method)


def _cosine_block(rows) -> np.ndarray:
    """Pairwise cosine distance between the rows of a (k, v) array or sparse matrix."""
    gram = rows @ rows.T
    if hasattr(gram, "toarray"):
        gram = gram.toarray()
    gram = np.asarray(gram, dtype=np.float64)
    norms = np.sqrt(np.diag(gram))
    with np.errstate(divide="ignore", invalid="ignore"):
        sim = gram / np.outer(norms, norms)
    sim[~np.isfinite(sim)] = 0.0
    return np.clip(1.0 - sim, 0.0, 1.0)


def _old_block(net: HistoricalNetwork, idx: np.ndarray, method: Method,
               embeddings: "EmbeddingTable | None", old_terms: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    """Distances and direct-edge mask among known terms."""
    sub = net.cooc[idx][:, idx].toarray().astype(np.float64)
    direct = sub > 0
    if method is Method.TERM_PAPER:
        dc = net.term_doc_count[idx].astype(np.float64)
        d = np.clip(1.0 - sub / np.sqrt(np.outer(dc, dc)), 0.0, 1.0)
    elif method is Method.TERM_TERM:
        d = _cosine_block(net.cooc[idx].astype(np.float64))
    elif method is Method.EMBED:
        missing = np.array([t not in embeddings.index for t in old_terms])
        vecs = np.stack([embeddings.vector(t) if t in embeddings.index else np.zeros(embeddings.dim)
                         for t in old_terms])
        d = _cosine_block(vecs)
        d[missing, :] = 1.0
        d[:, missing] = 1.0
    elif method in (Method.GEO_DISTANCE, Method.GEO_DISTANCE_WEIGHT):
        hops = shortest_path(net.cooc, directed=False, unweighted=True, indices=idx)[:, idx]
        with np.errstate(divide="ignore"):
            d = np.where(np.isinf(hops), 1.0, 1.0 - 1.0 / (hops + 1.0))
        if method is Method.GEO_DISTANCE_WEIGHT:
            tt = _cosine_block(net.cooc[idx].astype(np.float64))
            d = np.where(direct, np.maximum(GEO_EPS, 1.0 - 1.0 / (tt + 1.0)), d)
    else:
        raise ConfigurationError(f"unsupported method {method}")
    return d, direct


def build_focal_matrix(
    net: HistoricalNetwork,
    paper: PaperRecord | Sequence[str],
    method: Method | str,
    embeddings: "EmbeddingTable | None" = None,
) -> FocalDistanceMatrix:
    """Distance matrix over a paper's terms (sorted) under one method."""
    method = Method(method)
    if method is Method.OVERRIDE:
        raise ConfigurationError("override matrices are built with FocalDistanceMatrix.from_matrix")
    # an empty window has no embeddings; every pair is new there anyway
    if method is Method.EMBED and embeddings is None and not net.empty:
        raise ConfigurationError("method 'embed' requires an embedding table")
    terms = paper.sorted_terms if isinstance(paper, PaperRecord) else tuple(sorted(set(paper)))
    n = len(terms)
    if n < 2:
        raise ValueError(f"need at least two terms, got {n}")

    old = np.array([t in net.vocab for t in terms], dtype=bool)
    dist = np.ones((n, n))
    klass = np.full((n, n), EdgeClass.NEW_NODE_NEW_EDGE, dtype=np.int8)

    pos = np.flatnonzero(old)
    if len(pos) >= 2:
        old_terms = [terms[p] for p in pos]
        idx = np.array([net.vocab[t] for t in old_terms], dtype=np.int64)
        d, direct = _old_block(net, idx, method, embeddings, old_terms)
        block = np.ix_(pos, pos)
        dist[block] = d
        klass[block] = np.where(direct, EdgeClass.OLD_NODE_OLD_EDGE, EdgeClass.OLD_NODE_NEW_EDGE)
    # exact symmetry
    dist = np.triu(dist, 1)
    dist = dist + dist.T
    klass = np.triu(klass, 1)
    klass = klass + klass.T
    np.fill_diagonal(klass, -1)
    return FocalDistanceMatrix(terms, dist, klass, method)
