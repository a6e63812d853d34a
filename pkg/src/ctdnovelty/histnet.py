"""Historical co-occurrence network for a focal year."""

from __future__ import annotations

import enum
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from .corpus import CorpusIndex, PaperRecord

logger = logging.getLogger(__name__)

DEFAULT_WINDOW = 5


class EdgeClass(enum.IntEnum):
    NEW_NODE_NEW_EDGE = 0
    OLD_NODE_NEW_EDGE = 1
    OLD_NODE_OLD_EDGE = 2

    @property
    def label(self) -> str:
        return self.name.lower()


@dataclass(frozen=True, eq=False)
class HistoricalNetwork:
    """Term vocabulary and co-occurrence counts over a window of papers.

    ``cooc`` is a symmetric CSR matrix with a zero diagonal; entry (i, j) is the
    number of window papers containing both terms. ``term_doc_count[i]`` is the
    number of window papers containing term i.
    """

    window: tuple[int, int]
    vocab: dict[str, int]
    terms: tuple[str, ...]
    term_doc_count: np.ndarray
    cooc: sp.csr_matrix
    paper_count: int

    @property
    def empty(self) -> bool:
        return self.paper_count == 0

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    def __contains__(self, term: str) -> bool:
        return term in self.vocab

    def index_of(self, term: str) -> int:
        try:
            return self.vocab[term]
        except KeyError:
            raise KeyError(f"term {term!r} not in historical vocabulary") from None

    def cooc_count(self, t_i: str, t_j: str) -> int:
        i, j = self.vocab.get(t_i), self.vocab.get(t_j)
        if i is None or j is None or i == j:
            return 0
        row = slice(self.cooc.indptr[i], self.cooc.indptr[i + 1])
        cols = self.cooc.indices[row]
        hit = np.searchsorted(cols, j)
        if hit < len(cols) and cols[hit] == j:
            return int(self.cooc.data[row][hit])
        return 0

    def edges(self) -> Iterable[tuple[int, int, int]]:
        """Unordered stored pairs (i < j, count)."""
        upper = sp.triu(self.cooc, k=1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        for k in order:
            yield int(upper.row[k]), int(upper.col[k]), int(upper.data[k])

    def same_content(self, other: "HistoricalNetwork") -> bool:
        return (
            self.window == other.window
            and self.terms == other.terms
            and self.paper_count == other.paper_count
            and np.array_equal(self.term_doc_count, other.term_doc_count)
            and self.cooc.shape == other.cooc.shape
            and (self.cooc != other.cooc).nnz == 0
        )


def window_bounds(focal_year: int, window_len: int) -> tuple[int, int]:
    if window_len < 1:
        raise ValueError(f"window_len must be >= 1, got {window_len}")
    return focal_year - window_len, focal_year - 1


def network_from_papers(
    papers: Iterable[PaperRecord | Iterable[str]],
    window: tuple[int, int] = (0, 0),
) -> HistoricalNetwork:
    """Build a network from an explicit sequence of papers (or bare term sets).

    Node indices are assigned by first occurrence; within a paper, terms are
    visited in sorted order so indexing does not depend on set iteration.
    """
    vocab: dict[str, int] = {}
    rows: list[int] = []
    cols: list[int] = []
    n_papers = 0
    for paper in papers:
        terms = paper.sorted_terms if isinstance(paper, PaperRecord) else sorted(set(paper))
        for t in terms:
            idx = vocab.setdefault(t, len(vocab))
            rows.append(n_papers)
            cols.append(idx)
        n_papers += 1

    v = len(vocab)
    incidence = sp.csr_matrix(
        (np.ones(len(rows), dtype=np.int64), (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
        shape=(n_papers, v),
    )
    full = (incidence.T @ incidence).tocsr()
    doc_count = np.asarray(full.diagonal(), dtype=np.int64)
    full.setdiag(0)
    full.eliminate_zeros()
    full.sort_indices()
    full.data = full.data.astype(np.int64, copy=False)
    terms = tuple(sorted(vocab, key=vocab.__getitem__))
    return HistoricalNetwork(window, vocab, terms, doc_count, full, n_papers)


def build_network(
    index: CorpusIndex,
    focal_year: int,
    window_len: int = DEFAULT_WINDOW,
    exclude_ids: Iterable[str] = (),
) -> HistoricalNetwork:
    """Network over papers published in the ``window_len`` years before ``focal_year``.

    The focal year itself is excluded. An empty window yields an empty network
    (``net.empty``), in which every focal term is new.
    """
    start, end = window_bounds(focal_year, window_len)
    skip = set(exclude_ids)
    papers = [p for p in index.in_years(start, end) if p.id not in skip]
    net = network_from_papers(papers, window=(start, end))
    if net.empty:
        logger.info("empty historical window %d-%d for focal year %d", start, end, focal_year)
    return net


def classify_pair(net: HistoricalNetwork, t_i: str, t_j: str) -> EdgeClass:
    if t_i == t_j:
        raise ValueError(f"self-pair {t_i!r} has no edge class")
    if t_i not in net.vocab or t_j not in net.vocab:
        return EdgeClass.NEW_NODE_NEW_EDGE
    if net.cooc_count(t_i, t_j) > 0:
        return EdgeClass.OLD_NODE_OLD_EDGE
    return EdgeClass.OLD_NODE_NEW_EDGE


class NetworkCache:
    """Networks keyed by (focal_year, window_len), optionally persisted to disk."""

    def __init__(self, index: CorpusIndex, directory: str | Path | None = None, force: bool = False):
        self.index = index
        self.directory = Path(directory) if directory is not None else None
        self.force = force
        self.builds = 0
        self.disk_hits = 0
        self._mem: dict[tuple[int, int], HistoricalNetwork] = {}

    def path_for(self, focal_year: int, window_len: int) -> Path:
        assert self.directory is not None
        return self.directory / f"net_{focal_year}_w{window_len}.ctdnet"

    def get(self, focal_year: int, window_len: int = DEFAULT_WINDOW) -> HistoricalNetwork:
        key = (focal_year, window_len)
        if key in self._mem:
            return self._mem[key]
        net = None
        if self.directory is not None and not self.force:
            path = self.path_for(*key)
            if path.exists():
                net = load_network(path)
                self.disk_hits += 1
        if net is None:
            net = build_network(self.index, focal_year, window_len)
            self.builds += 1
            if self.directory is not None:
                self.directory.mkdir(parents=True, exist_ok=True)
                save_network(net, self.path_for(*key))
        self._mem[key] = net
        return net


# on-disk layout, little-endian:
#   magic(8) version(u32) start(i32) end(i32) paper_count(i64) vocab(u32) nnz(u64)
#   vocab strings as (u32 length, utf-8 bytes)
#   term_doc_count i64[vocab]; edges i32[nnz], i32[nnz], i64[nnz] (upper triangle)
NET_MAGIC = b"CTDNET\x00\x01"
NET_VERSION = 1
_NET_HEADER = struct.Struct("<8sIiiqIQ")


class NetworkFormatError(ValueError):
    pass


def save_network(net: HistoricalNetwork, path: str | Path) -> None:
    upper = sp.triu(net.cooc, k=1).tocoo()
    order = np.lexsort((upper.col, upper.row))
    rows = upper.row[order].astype("<i4")
    cols = upper.col[order].astype("<i4")
    data = upper.data[order].astype("<i8")
    chunks = [_NET_HEADER.pack(NET_MAGIC, NET_VERSION, net.window[0], net.window[1],
                               net.paper_count, len(net.terms), len(data))]
    for t in net.terms:
        raw = t.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
    chunks.append(net.term_doc_count.astype("<i8").tobytes())
    chunks += [rows.tobytes(), cols.tobytes(), data.tobytes()]
    Path(path).write_bytes(b"".join(chunks))


def load_network(path: str | Path) -> HistoricalNetwork:
    buf = Path(path).read_bytes()
    if len(buf) < _NET_HEADER.size:
        raise NetworkFormatError(f"{path}: truncated header")
    magic, version, start, end, paper_count, v, nnz = _NET_HEADER.unpack_from(buf, 0)
    if magic != NET_MAGIC:
        raise NetworkFormatError(f"{path}: bad magic")
    if version != NET_VERSION:
        raise NetworkFormatError(f"{path}: unsupported format version {version}")
    pos = _NET_HEADER.size
    terms = []
    try:
        for _ in range(v):
            (n,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            terms.append(buf[pos:pos + n].decode("utf-8"))
            pos += n
    except struct.error:
        raise NetworkFormatError(f"{path}: truncated vocabulary") from None
    need = pos + 8 * v + (4 + 4 + 8) * nnz
    if len(buf) != need:
        raise NetworkFormatError(f"{path}: expected {need} bytes, found {len(buf)}")
    doc_count = np.frombuffer(buf, "<i8", v, pos).astype(np.int64)
    pos += 8 * v
    rows = np.frombuffer(buf, "<i4", nnz, pos).astype(np.int64)
    pos += 4 * nnz
    cols = np.frombuffer(buf, "<i4", nnz, pos).astype(np.int64)
    pos += 4 * nnz
    data = np.frombuffer(buf, "<i8", nnz, pos).astype(np.int64)
    cooc = sp.csr_matrix(
        (np.concatenate([data, data]), (np.concatenate([rows, cols]), np.concatenate([cols, rows]))),
        shape=(v, v),
    )
    cooc.sort_indices()
    vocab = {t: i for i, t in enumerate(terms)}
    return HistoricalNetwork((start, end), vocab, tuple(terms), doc_count, cooc, paper_count)
